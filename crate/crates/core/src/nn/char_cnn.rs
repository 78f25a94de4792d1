use super::params::{normal, xavier, Bound, ParamId, ParamStore};
use crate::error::{Result, SanError};
use crate::tensor::{RngStream, Tape, Tensor, Var};

pub const MAX_WORD_CHARS: usize = 20;

#[derive(Clone, Debug)]
pub struct ConvBank {
    pub window: usize,
    pub channels: usize,
    /// `[channels × window·char_dim]`; column block `k` reads offset `k` of the window.
    pub filter: ParamId,
    pub bias: ParamId,
}

/// Character embeddings plus one convolution bank per window width.
#[derive(Clone, Debug)]
pub struct CharCnnParams {
    pub table: ParamId,
    pub char_dim: usize,
    pub banks: Vec<ConvBank>,
    pub max_chars: usize,
}

impl CharCnnParams {
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        char_vocab: usize,
        char_dim: usize,
        windows: &[usize],
        channels: &[usize],
        rng: &mut RngStream,
    ) -> Result<Self> {
        if windows.len() != channels.len() || windows.is_empty() {
            return Err(SanError::Config("char CNN needs one channel count per window".into()));
        }
        if char_vocab == 0 || char_dim == 0 {
            return Err(SanError::Config(
                "char CNN vocabulary and width must be positive".into(),
            ));
        }
        let mut table = normal(&[char_vocab, char_dim], 0.1, rng);
        table.data_mut()[..char_dim].fill(0.0);
        let table = store.add(format!("{name}.table"), table, true);
        let banks = windows
            .iter()
            .zip(channels)
            .map(|(&window, &ch)| ConvBank {
                window,
                channels: ch,
                filter: store.add(
                    format!("{name}.w{window}.filter"),
                    xavier(ch, window * char_dim, rng),
                    true,
                ),
                bias: store.add(format!("{name}.w{window}.bias"), Tensor::zeros(&[ch]), true),
            })
            .collect();
        Ok(CharCnnParams {
            table,
            char_dim,
            banks,
            max_chars: MAX_WORD_CHARS,
        })
    }

    pub fn output_width(&self) -> usize {
        self.banks.iter().map(|b| b.channels).sum()
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.table];
        for b in &self.banks {
            ids.push(b.filter);
            ids.push(b.bias);
        }
        ids
    }
}

/// Encodes one word's characters into a `[Σchannels × 1]` column.
///
/// Each bank zero-pads `⌊window/2⌋` columns on both sides, convolves,
/// applies relu and max-pools over positions.
pub fn char_cnn_encode(tape: &Tape, bound: &Bound, params: &CharCnnParams, chars: &[usize]) -> Result<Var> {
    if chars.is_empty() {
        return Err(SanError::Empty("character sequence"));
    }
    let chars = &chars[..chars.len().min(params.max_chars)];
    let embedded = tape.gather(bound.var(params.table), chars)?;
    let len = chars.len();
    let mut pooled = Vec::with_capacity(params.banks.len());
    for bank in &params.banks {
        let pad = bank.window / 2;
        let padded = if pad > 0 {
            let zeros = tape.constant(Tensor::zeros(&[params.char_dim, pad]));
            tape.concat(&[zeros, embedded, zeros], 1)?
        } else {
            embedded
        };
        let positions = len + 2 * pad + 1 - bank.window;
        let unfolded = if bank.window == 1 {
            padded
        } else {
            let shifted: Vec<Var> = (0..bank.window)
                .map(|k| tape.slice(padded, 1, k, positions))
                .collect::<Result<_>>()?;
            tape.concat(&shifted, 0)?
        };
        let conv = tape.add_bias(tape.matmul(bound.var(bank.filter), unfolded)?, bound.var(bank.bias))?;
        pooled.push(tape.row_max(tape.relu(conv))?);
    }
    tape.concat(&pooled, 0)
}

/// Number of window positions a bank sees for a word of `len` characters.
pub fn window_positions(len: usize, window: usize) -> usize {
    len + 2 * (window / 2) + 1 - window
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_sized() -> (ParamStore, CharCnnParams) {
        let mut store = ParamStore::new();
        let p = CharCnnParams::init(
            &mut store,
            "char",
            30,
            20,
            &[1, 3, 5],
            &[50, 100, 150],
            &mut RngStream::new(8),
        )
        .unwrap();
        (store, p)
    }

    #[test]
    fn single_char_fits_every_window_once() {
        for w in [1, 3, 5] {
            assert_eq!(window_positions(1, w), 1);
        }
        assert_eq!(window_positions(4, 3), 4);
    }

    #[test]
    fn width_is_300_for_every_length() {
        let (store, p) = full_sized();
        let tape = Tape::new();
        let bound = store.bind(&tape);
        for len in 1..=MAX_WORD_CHARS + 3 {
            let chars: Vec<usize> = (0..len).map(|i| 1 + i % 29).collect();
            let out = char_cnn_encode(&tape, &bound, &p, &chars).unwrap();
            assert_eq!(tape.shape(out), vec![300, 1]);
        }
    }

    #[test]
    fn long_words_are_truncated() {
        let (store, p) = full_sized();
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let base: Vec<usize> = (0..MAX_WORD_CHARS).map(|i| 1 + i % 29).collect();
        let mut longer = base.clone();
        longer.extend([3, 4, 5]);
        let a = tape.value(char_cnn_encode(&tape, &bound, &p, &base).unwrap());
        let b = tape.value(char_cnn_encode(&tape, &bound, &p, &longer).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn empty_word_is_rejected() {
        let (store, p) = full_sized();
        let tape = Tape::new();
        let bound = store.bind(&tape);
        assert!(matches!(
            char_cnn_encode(&tape, &bound, &p, &[]),
            Err(SanError::Empty(_))
        ));
    }
}
