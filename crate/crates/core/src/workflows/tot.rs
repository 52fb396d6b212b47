use super::{EXPAND, INIT, SCORE};
use crate::effects::Context;
use crate::error::{Error, Result};
use crate::runtime::{await_, expect_future};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TotParams {
    pub n_steps: usize,
    pub n_select: usize,
    pub n_eval: usize,
}

impl Default for TotParams {
    fn default() -> Self {
        TotParams {
            n_steps: 4,
            n_select: 5,
            n_eval: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate<T> {
    pub state: T,
    pub score: f64,
    pub submission_index: usize,
}

/// The `k` best candidates by score; equal scores keep submission order.
pub fn top_k<T: Clone>(scored: &[ScoredCandidate<T>], k: usize) -> Vec<ScoredCandidate<T>> {
    let mut order: Vec<&ScoredCandidate<T>> = scored.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.submission_index.cmp(&b.submission_index))
    });
    order.into_iter().take(k).cloned().collect()
}

/// Beam search over abstract `init`, `expand` and `score` operations.
/// `on_step` sees the frontier after every step.
pub fn tree_of_thoughts(
    ctx: &Context,
    input: Value,
    params: TotParams,
    mut on_step: impl FnMut(usize, &[Value]),
) -> Result<Vec<Value>> {
    if params.n_select == 0 || params.n_eval == 0 {
        return Err(Error::bad_arg("tree_of_thoughts", "n_select and n_eval must be at least 1"));
    }
    let mut frontier = vec![ctx.perform(&INIT, &[input])?];
    for step in 0..params.n_steps {
        let expansions = frontier
            .iter()
            .map(|s| expect_future("expand", ctx.perform(&EXPAND, &[s.clone()])?))
            .collect::<Result<Vec<_>>>()?;
        let mut candidates = Vec::new();
        for f in &expansions {
            let v = await_(ctx, f)?;
            candidates.extend(
                v.into_list()
                    .ok_or_else(|| Error::bad_arg("expand", "expected a list of states"))?,
            );
        }
        let n_eval = Value::Int(params.n_eval as i64);
        let scores = candidates
            .iter()
            .map(|c| expect_future("score", ctx.perform(&SCORE, &[c.clone(), n_eval.clone()])?))
            .collect::<Result<Vec<_>>>()?;
        let mut scored = Vec::with_capacity(candidates.len());
        for (i, (state, f)) in candidates.into_iter().zip(&scores).enumerate() {
            let score = await_(ctx, f)?
                .as_float()
                .ok_or_else(|| Error::bad_arg("score", "expected a number"))?;
            scored.push(ScoredCandidate {
                state,
                score,
                submission_index: i,
            });
        }
        frontier = top_k(&scored, params.n_select)
            .into_iter()
            .map(|c| c.state)
            .collect();
        on_step(step, &frontier);
    }
    Ok(frontier)
}
