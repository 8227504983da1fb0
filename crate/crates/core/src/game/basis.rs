use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A scalar basis function of the joint action, seen from one player.
///
/// Every member of the family depends on the joint action only through the
/// player's own action `x_i` and the mean of the other participants' actions.
/// With no other participants that mean is taken to be zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    /// `1`
    Constant,
    /// `x_i`
    OwnLinear,
    /// `x_i^2`
    OwnQuadratic,
    /// `ln(x_i + shift)`, defined for `x_i + shift > 0`.
    OwnLogShifted { shift: f64 },
    /// `x_i * mean(x_{-i})`
    CrossBilinear,
    /// `mean(x_{-i})`
    MeanOthersLinear,
}

/// Own action and mean of the other participants' actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionContext {
    pub own: f64,
    pub others_mean: f64,
}

impl ActionContext {
    pub fn new(x: &[f64], i: usize) -> Result<Self> {
        if i >= x.len() {
            return Err(Error::Dimension(format!(
                "player position {i} outside joint action of length {}",
                x.len()
            )));
        }
        let others = x.len() - 1;
        let others_mean = if others == 0 {
            0.0
        } else {
            (x.iter().sum::<f64>() - x[i]) / others as f64
        };
        Ok(ActionContext {
            own: x[i],
            others_mean,
        })
    }
}

impl Basis {
    pub fn name(&self) -> &'static str {
        match self {
            Basis::Constant => "constant",
            Basis::OwnLinear => "own_linear",
            Basis::OwnQuadratic => "own_quadratic",
            Basis::OwnLogShifted { .. } => "own_log_shifted",
            Basis::CrossBilinear => "cross_bilinear",
            Basis::MeanOthersLinear => "mean_others_linear",
        }
    }

    fn log_argument(&self, own: f64, shift: f64) -> Result<f64> {
        let arg = own + shift;
        if arg > 0.0 && arg.is_finite() {
            Ok(arg)
        } else {
            Err(Error::Domain(format!(
                "ln(x + {shift}) undefined at x = {own}"
            )))
        }
    }

    pub fn value_at(&self, ctx: ActionContext) -> Result<f64> {
        Ok(match *self {
            Basis::Constant => 1.0,
            Basis::OwnLinear => ctx.own,
            Basis::OwnQuadratic => ctx.own * ctx.own,
            Basis::OwnLogShifted { shift } => self.log_argument(ctx.own, shift)?.ln(),
            Basis::CrossBilinear => ctx.own * ctx.others_mean,
            Basis::MeanOthersLinear => ctx.others_mean,
        })
    }

    /// Derivative with respect to the player's own action.
    pub fn d_own_at(&self, ctx: ActionContext) -> Result<f64> {
        Ok(match *self {
            Basis::Constant | Basis::MeanOthersLinear => 0.0,
            Basis::OwnLinear => 1.0,
            Basis::OwnQuadratic => 2.0 * ctx.own,
            Basis::OwnLogShifted { shift } => 1.0 / self.log_argument(ctx.own, shift)?,
            Basis::CrossBilinear => ctx.others_mean,
        })
    }

    /// Second derivative with respect to the player's own action.
    pub fn d2_own_at(&self, ctx: ActionContext) -> Result<f64> {
        Ok(match *self {
            Basis::Constant | Basis::OwnLinear | Basis::CrossBilinear | Basis::MeanOthersLinear => {
                0.0
            }
            Basis::OwnQuadratic => 2.0,
            Basis::OwnLogShifted { shift } => {
                let arg = self.log_argument(ctx.own, shift)?;
                -1.0 / (arg * arg)
            }
        })
    }

    pub fn value(&self, x: &[f64], i: usize) -> Result<f64> {
        self.value_at(ActionContext::new(x, i)?)
    }

    pub fn d_own(&self, x: &[f64], i: usize) -> Result<f64> {
        self.d_own_at(ActionContext::new(x, i)?)
    }

    pub fn d2_own(&self, x: &[f64], i: usize) -> Result<f64> {
        self.d2_own_at(ActionContext::new(x, i)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Basis::OwnLogShifted { shift } = self {
            if !shift.is_finite() {
                return Err(Error::Invalid(format!("non-finite log shift {shift}")));
            }
        }
        Ok(())
    }
}
