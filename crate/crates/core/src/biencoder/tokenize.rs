//! Deterministic subword segmentation for the built-in encoders: lowercased
//! words are cut into fixed-width character pieces and hashed into a
//! bucketed vocabulary. Id 0 is reserved for the sequence-summary position.

pub const CLS_ID: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubwordTokenizer {
    pub vocab_buckets: usize,
    pub piece_chars: usize,
}

/// A tokenized sequence: `ids[0]` is the summary position and
/// `first_piece[t]` is the position of token `t`'s first piece, if it
/// survived truncation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub first_piece: Vec<Option<usize>>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl SubwordTokenizer {
    pub fn pieces(&self, word: &str) -> Vec<String> {
        let lower: Vec<char> = word.to_lowercase().chars().collect();
        if lower.is_empty() {
            return vec![String::new()];
        }
        lower
            .chunks(self.piece_chars.max(1))
            .enumerate()
            .map(|(i, c)| {
                let body: String = c.iter().collect();
                if i == 0 {
                    body
                } else {
                    format!("##{body}")
                }
            })
            .collect()
    }

    pub fn piece_id(&self, piece: &str) -> usize {
        1 + (fnv1a(piece.as_bytes()) % (self.vocab_buckets as u64 - 1)) as usize
    }

    /// Encodes words into at most `max_len` positions, summary position included.
    pub fn encode<S: AsRef<str>>(&self, words: &[S], max_len: usize) -> Encoded {
        let mut ids = vec![CLS_ID];
        let mut first_piece = Vec::with_capacity(words.len());
        let mut truncated = false;
        for w in words {
            let pieces = self.pieces(w.as_ref());
            if truncated || ids.len() >= max_len {
                truncated = true;
                first_piece.push(None);
                continue;
            }
            first_piece.push(Some(ids.len()));
            for p in pieces {
                if ids.len() >= max_len {
                    truncated = true;
                    break;
                }
                ids.push(self.piece_id(&p));
            }
        }
        if truncated {
            log::debug!("sequence of {} words truncated to {max_len} pieces", words.len());
        }
        Encoded { ids, first_piece }
    }
}
