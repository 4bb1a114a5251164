//! Text generation: predict, append, shift.
//!
//! Generation mirrors the training-time window mechanism. The window at
//! step t+1 is the window at step t shifted left by one with the step-t
//! output appended, so a trained model continues text the same way it
//! learned it.

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::network::{predict, NetworkConfig, NetworkParams};
use crate::numerics::{argmax, sample_categorical, softmax, Rng};

/// How the next character is chosen from the predicted distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingMode {
    /// Argmax; ties break toward the lowest index. Fully deterministic.
    Greedy,
    /// Sample from `softmax(ln p / tau)`. Temperatures below 1 sharpen
    /// the distribution, above 1 flatten it.
    Temperature(f64),
}

/// A generation job: seed text, how many characters to emit, the
/// sampling rule, and the RNG seed that fixes any randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub seed_text: String,
    pub limit: usize,
    pub mode: SamplingMode,
    pub rng_seed: u64,
}

impl GenerationRequest {
    fn validate(&self) -> Result<()> {
        if let SamplingMode::Temperature(tau) = self.mode {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "temperature must be a positive finite number, got {tau}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    /// Exactly `limit` characters, all from the vocabulary.
    pub text: String,
    /// The window of `L` characters actually consumed as the seed.
    pub seed_used: String,
}

/// Turns seed text into the L-character starting window: the last L
/// characters when the seed is long enough, otherwise left-padded with
/// spaces (which must then be in the vocabulary).
pub fn prepare_seed(seed: &str, vocab: &Vocabulary, window_len: usize) -> Result<Vec<u32>> {
    let chars: Vec<char> = seed.chars().collect();
    if chars.is_empty() {
        return Err(Error::EmptySeed);
    }
    let encoded = vocab.encode(&chars)?;
    if encoded.len() >= window_len {
        Ok(encoded[encoded.len() - window_len..].to_vec())
    } else {
        let space = vocab.index_of(' ').ok_or(Error::PadCharMissing)?;
        let mut window = vec![space; window_len - encoded.len()];
        window.extend_from_slice(&encoded);
        Ok(window)
    }
}

/// Generates exactly `request.limit` characters from the seed.
///
/// Each step runs the network in inference mode on the current window,
/// picks a character by the requested rule, appends it, and drops the
/// window's first character. Raw model output is returned; no cleanup is
/// applied.
pub fn generate(
    params: &NetworkParams,
    config: &NetworkConfig,
    vocab: &Vocabulary,
    request: &GenerationRequest,
) -> Result<GenerationResult> {
    request.validate()?;
    if vocab.size() != config.vocab_size {
        return Err(Error::shape(
            "generate",
            format!("vocabulary {} vs network {}", vocab.size(), config.vocab_size),
        ));
    }
    let mut window = prepare_seed(&request.seed_text, vocab, config.window)?;
    let seed_used = vocab.decode(&window)?;
    let mut rng = Rng::new(request.rng_seed);
    let mut text = String::with_capacity(request.limit);
    for _ in 0..request.limit {
        let probs = predict(params, config, &window)?;
        let next = match request.mode {
            SamplingMode::Greedy => argmax(&probs),
            SamplingMode::Temperature(tau) => {
                let scaled: Vec<f64> =
                    probs.iter().map(|&p| p.max(1e-300).ln() / tau).collect();
                sample_categorical(&softmax(&scaled), &mut rng)?
            }
        };
        let next = next as u32;
        text.push(vocab.char_of(next).ok_or(Error::IndexOutOfRange {
            index: next as usize,
            vocab_size: vocab.size(),
        })?);
        window.rotate_left(1);
        *window.last_mut().expect("window is non-empty") = next;
    }
    Ok(GenerationResult { text, seed_used })
}
