use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA_DIM: usize = 100;
pub const THETA_DIM: usize = 6;
pub const PSI_DIM: usize = 50;
pub const DELTA_DIM: usize = 128;
pub const STATE_DIM: usize = BETA_DIM + THETA_DIM + PSI_DIM + DELTA_DIM;

/// Block sizes of a flattened parameter row.
///
/// The full head model uses [`StateLayout::FLAME`]; reduced layouts keep the
/// same block order and a fixed six-entry pose block, so small models can be
/// trained on a subset of shape/expression/detail coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub beta: usize,
    pub theta: usize,
    pub psi: usize,
    pub delta: usize,
}

impl Default for StateLayout {
    fn default() -> Self {
        Self::FLAME
    }
}

impl StateLayout {
    pub const FLAME: StateLayout = StateLayout {
        beta: BETA_DIM,
        theta: THETA_DIM,
        psi: PSI_DIM,
        delta: DELTA_DIM,
    };

    /// Reduced layout used by the desk-scale pipeline (20 entries).
    pub const TOY: StateLayout = StateLayout {
        beta: 2,
        theta: THETA_DIM,
        psi: 8,
        delta: 4,
    };

    pub fn new(beta: usize, psi: usize, delta: usize) -> Self {
        Self {
            beta,
            theta: THETA_DIM,
            psi,
            delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta != THETA_DIM {
            return Err(Error::Invalid(format!(
                "pose block must have {THETA_DIM} entries, got {}",
                self.theta
            )));
        }
        if self.beta > BETA_DIM || self.psi > PSI_DIM || self.delta > DELTA_DIM {
            return Err(Error::Invalid(format!(
                "layout {self:?} exceeds the canonical block sizes"
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.beta + self.theta + self.psi + self.delta
    }

    pub fn beta_range(&self) -> std::ops::Range<usize> {
        0..self.beta
    }

    pub fn theta_range(&self) -> std::ops::Range<usize> {
        self.beta..self.beta + self.theta
    }

    /// Global head rotation columns.
    pub fn head_range(&self) -> std::ops::Range<usize> {
        self.beta..self.beta + 3
    }

    pub fn jaw_range(&self) -> std::ops::Range<usize> {
        self.beta + 3..self.beta + 6
    }

    pub fn psi_range(&self) -> std::ops::Range<usize> {
        let start = self.beta + self.theta;
        start..start + self.psi
    }

    pub fn delta_range(&self) -> std::ops::Range<usize> {
        let start = self.beta + self.theta + self.psi;
        start..start + self.delta
    }
}

/// One frame of head-model coefficients in canonical sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct FlameParams {
    pub beta: Vec<f64>,
    pub theta: [f64; THETA_DIM],
    pub psi: Vec<f64>,
    pub delta: Vec<f64>,
}

impl Default for FlameParams {
    fn default() -> Self {
        Self::zeros()
    }
}

impl FlameParams {
    pub fn zeros() -> Self {
        Self {
            beta: vec![0.0; BETA_DIM],
            theta: [0.0; THETA_DIM],
            psi: vec![0.0; PSI_DIM],
            delta: vec![0.0; DELTA_DIM],
        }
    }

    /// Builds parameters from a flat canonical row of length 284.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != STATE_DIM {
            return Err(Error::shape("FlameParams::from_flat", STATE_DIM, flat.len()));
        }
        Self::from_row(flat, &StateLayout::FLAME)
    }

    /// Reads a row in `layout`, zero-filling coefficients the layout omits.
    pub fn from_row(row: &[f64], layout: &StateLayout) -> Result<Self> {
        layout.validate()?;
        if row.len() != layout.total() {
            return Err(Error::shape("FlameParams::from_row", layout.total(), row.len()));
        }
        let mut out = Self::zeros();
        out.beta[..layout.beta].copy_from_slice(&row[layout.beta_range()]);
        out.theta.copy_from_slice(&row[layout.theta_range()]);
        out.psi[..layout.psi].copy_from_slice(&row[layout.psi_range()]);
        out.delta[..layout.delta].copy_from_slice(&row[layout.delta_range()]);
        out.validate()?;
        Ok(out)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(STATE_DIM);
        out.extend_from_slice(&self.beta);
        out.extend_from_slice(&self.theta);
        out.extend_from_slice(&self.psi);
        out.extend_from_slice(&self.delta);
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != BETA_DIM {
            return Err(Error::shape("FlameParams.beta", BETA_DIM, self.beta.len()));
        }
        if self.psi.len() != PSI_DIM {
            return Err(Error::shape("FlameParams.psi", PSI_DIM, self.psi.len()));
        }
        if self.delta.len() != DELTA_DIM {
            return Err(Error::shape("FlameParams.delta", DELTA_DIM, self.delta.len()));
        }
        let finite = self
            .beta
            .iter()
            .chain(&self.theta)
            .chain(&self.psi)
            .chain(&self.delta)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("FlameParams".into()));
        }
        Ok(())
    }

    pub fn head_pose(&self) -> [f64; 3] {
        [self.theta[0], self.theta[1], self.theta[2]]
    }

    pub fn jaw_pose(&self) -> [f64; 3] {
        [self.theta[3], self.theta[4], self.theta[5]]
    }
}

impl std::str::FromStr for StateLayout {
    type Err = Error;

    /// `flame`, `toy`, or `beta,psi,delta` block sizes.
    fn from_str(s: &str) -> Result<Self> {
        let lay = match s.trim().to_ascii_lowercase().as_str() {
            "flame" => Self::FLAME,
            "toy" => Self::TOY,
            other => {
                let sizes: Vec<usize> = other
                    .split(',')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Invalid(format!("layout '{s}' is not flame, toy or beta,psi,delta")))?;
                match sizes[..] {
                    [b, p, d] => Self::new(b, p, d),
                    _ => return Err(Error::Invalid(format!("layout '{s}' needs three block sizes"))),
                }
            }
        };
        lay.validate()?;
        Ok(lay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_ranges_tile_the_state() {
        let l = StateLayout::FLAME;
        assert_eq!(l.total(), 284);
        assert_eq!(l.beta_range(), 0..100);
        assert_eq!(l.theta_range(), 100..106);
        assert_eq!(l.head_range(), 100..103);
        assert_eq!(l.jaw_range(), 103..106);
        assert_eq!(l.psi_range(), 106..156);
        assert_eq!(l.delta_range(), 156..284);
    }

    #[test]
    fn flat_round_trip() {
        let flat: Vec<f64> = (0..STATE_DIM).map(|i| i as f64 * 0.5).collect();
        let p = FlameParams::from_flat(&flat).unwrap();
        assert_eq!(p.theta, [50.0, 50.5, 51.0, 51.5, 52.0, 52.5]);
        assert_eq!(p.to_flat(), flat);
    }

    #[test]
    fn reduced_layout_zero_fills() {
        let layout = StateLayout::new(2, 3, 1);
        let row = [1.0, 2.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 7.0, 8.0, 9.0, 10.0];
        let p = FlameParams::from_row(&row, &layout).unwrap();
        assert_eq!(&p.beta[..3], &[1.0, 2.0, 0.0]);
        assert_eq!(p.head_pose(), [0.1, 0.2, 0.3]);
        assert_eq!(p.jaw_pose(), [0.4, 0.5, 0.6]);
        assert_eq!(&p.psi[..4], &[7.0, 8.0, 9.0, 0.0]);
        assert_eq!(p.delta[0], 10.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(FlameParams::from_flat(&[0.0; 10]).is_err());
        let mut flat = vec![0.0; STATE_DIM];
        flat[7] = f64::NAN;
        assert!(matches!(FlameParams::from_flat(&flat), Err(Error::NonFinite(_))));
        let bad = StateLayout {
            theta: 4,
            ..StateLayout::FLAME
        };
        assert!(bad.validate().is_err());
    }
}
