//! Dense f64 tensor arithmetic with reverse-mode automatic differentiation.
//!
//! A [`GradTape`] records operations in execution order; [`GradTape::backward`]
//! replays them in reverse, accumulating gradients additively across fan-out.
//! The op set is exactly what the hybrid Inception/BiLSTM/attention network
//! needs: valid-padding conv2d, batch norm, swish/tanh/sigmoid, softmax,
//! 2x2 max pooling, concat, dropout, a fused LSTM with backpropagation
//! through time, row reversal for the backward direction, attention helpers,
//! mean pooling, dense layers via matmul, and softmax cross-entropy.
//!
//! Everything is f64 and single-threaded per tape; independent tapes may run
//! on separate threads freely.

mod adam;
mod init;
mod lstm;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use init::{he_uniform, inv_sqrt_uniform};
pub use tape::{sigmoid, Activation, GradTape, Mode, RunningStats, TensorRef};
pub use tensor::{Result, Tensor, TensorError};

/// Bidirectional LSTM: two independent parameter sets, the backward one run
/// over the reversed sequence and re-reversed so time indices align, then
/// concatenated per time step to `[T, 2U]`.
#[allow(clippy::too_many_arguments)]
pub fn bilstm(
    tape: &mut GradTape,
    seq: TensorRef,
    fwd: (TensorRef, TensorRef, TensorRef),
    bwd: (TensorRef, TensorRef, TensorRef),
) -> Result<TensorRef> {
    let forward = tape.lstm(seq, fwd.0, fwd.1, fwd.2)?;
    let reversed_in = tape.reverse_rows(seq)?;
    let backward_rev = tape.lstm(reversed_in, bwd.0, bwd.1, bwd.2)?;
    let backward = tape.reverse_rows(backward_rev)?;
    tape.concat(&[forward, backward], 1)
}

/// Direction selector for a single LSTM pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// One LSTM direction over a `[T,D]` sequence. The backward direction
/// consumes the sequence reversed and emits hidden states re-reversed so
/// output row `t` still corresponds to input row `t`.
pub fn lstm_direction(
    tape: &mut GradTape,
    seq: TensorRef,
    w: TensorRef,
    r: TensorRef,
    b: TensorRef,
    direction: Direction,
) -> Result<TensorRef> {
    match direction {
        Direction::Forward => tape.lstm(seq, w, r, b),
        Direction::Backward => {
            let rev = tape.reverse_rows(seq)?;
            let out = tape.lstm(rev, w, r, b)?;
            tape.reverse_rows(out)
        }
    }
}

/// Additive attention over a `[T,F]` sequence: scores
/// `e_t = u . tanh(W h_t + b)`, weights `alpha = softmax(e)`, output row
/// `t` is `alpha_t * h_t` (shape preserved). Returns the weighted sequence
/// and the attention weights.
pub fn additive_attention(
    tape: &mut GradTape,
    seq: TensorRef,
    w: TensorRef,
    b: TensorRef,
    u: TensorRef,
) -> Result<(TensorRef, TensorRef)> {
    let projected = tape.matmul(seq, w)?;
    let shifted = tape.add_rows(projected, b)?;
    let squashed = tape.activation(shifted, Activation::Tanh);
    let scores = tape.matvec(squashed, u)?;
    let alpha = tape.softmax(scores)?;
    let weighted = tape.scale_rows(seq, alpha)?;
    Ok((weighted, alpha))
}
