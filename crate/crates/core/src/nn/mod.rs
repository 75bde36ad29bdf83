//! Small dense-tensor engine with reverse-mode differentiation.

pub mod checkpoint;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use params::{AdamConfig, ParamId, ParamStore};
pub use tape::{Gradients, Reduce, Tape, Var, LAYERNORM_EPS, LOG_CLAMP};
pub use tensor::{ordered_sum, Tensor, MAX_RANK};

/// Adds every parameter gradient in `grads` to `store`.
pub fn accumulate_grads(store: &mut ParamStore, grads: &Gradients) -> crate::Result<()> {
    for (id, g) in grads.param_grads() {
        store.accumulate(id, &g.data)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
