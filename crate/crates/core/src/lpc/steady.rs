use nalgebra::{DMatrix, DVector};

use super::{jump_probabilities, LpcError, LpcRateMatrix};
use crate::linalg::{self, to_dense};
use crate::stage::StageBlockChain;
use crate::steady::SteadyState;

/// Stationary distribution of the stage view with an unbounded stage
/// direction: `π_{i+1} = π_i R̂` for `i ≥ 1`, boundary stages from the
/// balance equations of stages 0 and 1. Returned vectors are per stage for
/// the chain's stage window; the mass above it is `tail_mass`.
pub fn lpc_steady_state(stage: &StageBlockChain, rhat: &LpcRateMatrix) -> Result<SteadyState, LpcError> {
    let l = stage.num_levels();
    if rhat.dim() != l {
        return Err(LpcError::Dimension {
            rhat: rhat.dim(),
            levels: l,
        });
    }
    if stage.num_stages < 3 {
        return Err(LpcError::TooFewStages(stage.num_stages));
    }
    let r = if stage.level_capped {
        let (phi, _) = jump_probabilities(stage)?;
        rhat.to_dense_closed(phi.stage_ratio())
    } else {
        rhat.to_dense()
    };
    // upper triangular: the spectral radius is the largest diagonal entry
    let rho = (0..l).map(|i| r[(i, i)]).fold(0.0_f64, f64::max);
    if rho >= 1.0 {
        return Err(LpcError::Unstable(rho));
    }
    let (a0, a1, a2) = (to_dense(&stage.a0), to_dense(&stage.a1), to_dense(&stage.a2));
    let (b0, b1) = (to_dense(&stage.b0), to_dense(&stage.b1));
    let eye = DMatrix::<f64>::identity(l, l);
    let ones = DVector::from_element(l, 1.0);
    let geo = (&eye - &r).try_inverse().ok_or(LpcError::SingularBoundary)?;
    let tail_ones = &geo * &ones;

    let mut sys = DMatrix::zeros(2 * l, 2 * l);
    sys.view_mut((0, 0), (l, l)).copy_from(&b1);
    sys.view_mut((0, l), (l, l)).copy_from(&b0);
    sys.view_mut((l, 0), (l, l)).copy_from(&a2);
    sys.view_mut((l, l), (l, l)).copy_from(&(&a1 + &r * &a2));
    for i in 0..l {
        sys[(i, 0)] = 1.0;
        sys[(l + i, 0)] = tail_ones[i];
    }
    let mut rhs = vec![0.0; 2 * l];
    rhs[0] = 1.0;
    let x = linalg::solve_row_dense(&sys, &rhs).ok_or(LpcError::SingularBoundary)?;

    let mut stages = vec![x[..l].to_vec(), x[l..].to_vec()];
    for _ in 2..stage.num_stages {
        let next = linalg::vec_times_dense(stages.last().unwrap(), &r);
        stages.push(next);
    }
    for (i, v) in stages.iter_mut().enumerate() {
        for p in v.iter_mut() {
            if *p < 0.0 {
                if *p < -1e-12 {
                    return Err(LpcError::Negative { stage: i, value: *p });
                }
                *p = 0.0;
            }
        }
    }
    let beyond = linalg::vec_times_dense(stages.last().unwrap(), &r);
    let tail: f64 = beyond.iter().zip(tail_ones.iter()).map(|(p, t)| p * t).sum();

    // balance of every stage whose neighbours are all in the window
    let mut residual = 0.0_f64;
    for k in 0..stage.num_stages - 1 {
        let own = if k == 0 { &b1 } else { &a1 };
        let mut res = linalg::vec_times_dense(&stages[k], own);
        let above = linalg::vec_times_dense(&stages[k + 1], &a2);
        res.iter_mut().zip(above).for_each(|(a, b)| *a += b);
        if k > 0 {
            let up = if k == 1 { &b0 } else { &a0 };
            let below = linalg::vec_times_dense(&stages[k - 1], up);
            res.iter_mut().zip(below).for_each(|(a, b)| *a += b);
        }
        residual = residual.max(linalg::max_abs_slice(&res));
    }
    Ok(SteadyState::new(stages, residual, tail.max(0.0)))
}
