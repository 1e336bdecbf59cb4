use std::ops::Range;

use crate::env::{AgentId, ObsLayout};
use crate::error::{Error, Result};
use crate::net::PolicyParams;
use crate::scalar::Scalar;

fn column_norm<T: Scalar>(params: &PolicyParams<T>, layout: &ObsLayout, cols: Range<usize>) -> Result<T> {
    let input = params.shape().input;
    if layout.len() != input {
        return Err(Error::shape("observation layout", input, layout.len()));
    }
    if cols.end > input {
        return Err(Error::shape("input columns", input, cols.end));
    }
    let w1 = params.tensor("trunk.w1").expect("trunk present");
    let mut ss = T::zero();
    for row in w1.chunks_exact(input) {
        for &w in &row[cols.clone()] {
            ss += w * w;
        }
    }
    Ok(ss.sqrt())
}

/// Frobenius norm of the first-layer weights reading the other agent's message slot.
pub fn message_input_norm<T: Scalar>(params: &PolicyParams<T>, layout: &ObsLayout, listener: AgentId) -> Result<T> {
    column_norm(params, layout, layout.message_slot(listener.other()))
}

/// Frobenius norm of the first-layer weights reading both payoff tables.
pub fn payoff_input_norm<T: Scalar>(params: &PolicyParams<T>, layout: &ObsLayout) -> Result<T> {
    column_norm(params, layout, layout.payoffs())
}
