use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::LpcError;
use crate::stage::StageBlockChain;

/// Jump probabilities of the homogeneous interior, indexed by (level change,
/// stage change).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpProbabilities {
    /// ⟨1,−1⟩
    pub level_up_stage_down: f64,
    /// ⟨1,0⟩
    pub level_up: f64,
    /// ⟨1,1⟩
    pub level_up_stage_up: f64,
    /// ⟨0,1⟩
    pub stage_up: f64,
    /// ⟨0,−1⟩
    pub stage_down: f64,
}

impl JumpProbabilities {
    /// Arguments in the order ⟨1,−1⟩, ⟨1,0⟩, ⟨1,1⟩, ⟨0,1⟩, ⟨0,−1⟩.
    pub fn new(p1m1: f64, p10: f64, p11: f64, p01: f64, p0m1: f64) -> Result<Self, LpcError> {
        let phi = JumpProbabilities {
            level_up_stage_down: p1m1,
            level_up: p10,
            level_up_stage_up: p11,
            stage_up: p01,
            stage_down: p0m1,
        };
        let all = phi.as_array();
        if let Some(p) = all.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(LpcError::InvalidPhi(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(LpcError::InvalidPhi(format!("probabilities sum to {sum}")));
        }
        Ok(phi)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.level_up_stage_down,
            self.level_up,
            self.level_up_stage_up,
            self.stage_up,
            self.stage_down,
        ]
    }

    pub fn get(&self, e1: i32, e2: i32) -> f64 {
        match (e1, e2) {
            (1, -1) => self.level_up_stage_down,
            (1, 0) => self.level_up,
            (1, 1) => self.level_up_stage_up,
            (0, 1) => self.stage_up,
            (0, -1) => self.stage_down,
            _ => 0.0,
        }
    }

    /// No diagonal level moves, so each G_h is a single series.
    pub fn is_special(&self) -> bool {
        self.level_up_stage_down == 0.0 && self.level_up_stage_up == 0.0
    }

    /// Row sum of the rate matrix: expected stage-up over stage-down weight.
    pub fn stage_ratio(&self) -> f64 {
        (self.stage_up + self.level_up_stage_up) / (self.stage_down + self.level_up_stage_down)
    }
}

/// Compass name of a jump in the (level, stage) plane; level is east.
pub fn direction_name(e1: isize, e2: isize) -> String {
    if e1.abs() >= 2 || e2.abs() >= 2 {
        return format!("jump <{e1},{e2}>");
    }
    let ns = match e2 {
        1 => "N",
        -1 => "S",
        _ => "",
    };
    let ew = match e1 {
        1 => "E",
        -1 => "W",
        _ => "",
    };
    format!("'{ns}{ew}' <{e1},{e2}>")
}

/// Rates `[⟨1,−1⟩, ⟨1,0⟩, ⟨1,1⟩, ⟨0,1⟩, ⟨0,−1⟩]` and exit rate of level row `n`.
fn row_rates(stage: &StageBlockChain, n: usize) -> Result<([f64; 5], f64), LpcError> {
    let mut rates = [0.0; 5];
    let mut exit = 0.0;
    let blocks = [(&stage.a1, 0isize), (&stage.a0, 1), (&stage.a2, -1)];
    for (block, e2) in blocks {
        let row = block.row(n);
        for (&c, &v) in row.col_indices().iter().zip(row.values()) {
            let e1 = c as isize - n as isize;
            match (e1, e2) {
                (0, 0) => exit = -v,
                (1, 0) => rates[1] = v,
                (1, 1) => rates[2] = v,
                (0, 1) => rates[3] = v,
                (1, -1) => rates[0] = v,
                (0, -1) => rates[4] = v,
                _ => {
                    return Err(LpcError::Violation {
                        direction: direction_name(e1, e2),
                        level: n,
                    })
                }
            }
        }
    }
    Ok((rates, exit))
}

const NAMES: [&str; 5] = ["<1,-1>", "<1,0>", "<1,1>", "<0,1>", "<0,-1>"];

/// φ of the interior stage blocks and their common exit rate.
pub fn jump_probabilities(stage: &StageBlockChain) -> Result<(JumpProbabilities, f64), LpcError> {
    let levels = stage.num_levels();
    let interior = if stage.level_capped && levels > 1 { levels - 1 } else { levels };
    let (reference, d) = row_rates(stage, 0)?;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * d.max(1.0);
    for n in 0..levels {
        let (rates, exit) = row_rates(stage, n)?;
        if n >= interior {
            // The cap row has no level moves. Its stage moves either match the
            // interior (reflecting cap) or also absorb the diagonal moves
            // (lumping cap).
            for (k, diagonal) in [(3, 2), (4, 0)] {
                if !same(rates[k], reference[k]) && !same(rates[k], reference[k] + reference[diagonal]) {
                    return Err(LpcError::Inhomogeneous {
                        level: n,
                        direction: NAMES[k],
                    });
                }
            }
            continue;
        }
        if !same(exit, d) {
            return Err(LpcError::NotUniformizable {
                level: n,
                rate: exit,
                expected: d,
            });
        }
        for k in 0..5 {
            if !same(rates[k], reference[k]) {
                return Err(LpcError::Inhomogeneous {
                    level: n,
                    direction: NAMES[k],
                });
            }
        }
    }
    let total: f64 = reference.iter().sum();
    if !same(total, d) {
        return Err(LpcError::NotUniformizable {
            level: 0,
            rate: total,
            expected: d,
        });
    }
    let p = reference.map(|r| r / d);
    let phi = JumpProbabilities::new(p[0], p[1], p[2], p[3], 1.0 - p[0] - p[1] - p[2] - p[3])?;
    Ok((phi, d))
}

/// Leading `levels × levels` part of the interior stage blocks of a chain with
/// an unbounded level direction: `(A0, A1, A2)`.
pub fn homogeneous_stage_blocks(
    phi: &JumpProbabilities,
    exit_rate: f64,
    levels: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let band = |diag: f64, sup: f64| {
        DMatrix::from_fn(levels, levels, |i, j| {
            if i == j {
                diag * exit_rate
            } else if j == i + 1 {
                sup * exit_rate
            } else {
                0.0
            }
        })
    };
    (
        band(phi.stage_up, phi.level_up_stage_up),
        band(-1.0, phi.level_up),
        band(phi.stage_down, phi.level_up_stage_down),
    )
}
