use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound on `|γ|`, the logit of the zero-inflation probability.
pub const GAMMA_CLAMP: f64 = 10.0;
/// Bound on the linear predictors of the log links.
pub const EXPONENT_CLAMP: f64 = 30.0;

/// Fitted parameters of one feature.
///
/// `log λᵢ = beta0 + xᵢ·beta + log Mᵢ`, `log θᵢ = beta0_star + xᵢ·beta_star`,
/// `π = logistic(gamma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipgParams {
    #[serde(with = "decimal")]
    pub beta0: f64,
    #[serde(with = "decimal_vec")]
    pub beta: Vec<f64>,
    #[serde(with = "decimal")]
    pub beta0_star: f64,
    #[serde(with = "decimal_vec")]
    pub beta_star: Vec<f64>,
    #[serde(with = "decimal")]
    pub gamma: f64,
}

impl ZipgParams {
    /// Intercept-only parameters with covariate dimension `d`.
    pub fn new(d: usize, beta0: f64, beta0_star: f64, gamma: f64) -> Self {
        Self { beta0, beta: vec![0.0; d], beta0_star, beta_star: vec![0.0; d], gamma: clamp_gamma(gamma) }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn pi(&self) -> f64 {
        logistic(self.gamma)
    }

    pub fn is_finite(&self) -> bool {
        self.beta0.is_finite()
            && self.beta0_star.is_finite()
            && self.gamma.is_finite()
            && self.beta.iter().chain(&self.beta_star).all(|v| v.is_finite())
    }

    /// Flat layout `[β₀, β, β₀*, β*, γ]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dim() + 3);
        v.push(self.beta0);
        v.extend(&self.beta);
        v.push(self.beta0_star);
        v.extend(&self.beta_star);
        v.push(self.gamma);
        v
    }

    pub fn from_vec(d: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 2 * d + 3 {
            return Err(Error::Dimension(format!("parameter vector of length {} for d = {d}", v.len())));
        }
        Ok(Self {
            beta0: v[0],
            beta: v[1..=d].to_vec(),
            beta0_star: v[d + 1],
            beta_star: v[d + 2..2 * d + 2].to_vec(),
            gamma: clamp_gamma(v[2 * d + 2]),
        })
    }
}

pub(crate) fn clamp_gamma(g: f64) -> f64 {
    g.clamp(-GAMMA_CLAMP, GAMMA_CLAMP)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Individual-specific distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub lambda: f64,
    pub theta: f64,
    pub pi: f64,
    /// Set when a linear predictor had to be clamped to `±EXPONENT_CLAMP`.
    pub clamped: bool,
}

/// Evaluate both log links for one individual.
pub fn link_eval(params: &ZipgParams, x: &[f64], depth: f64) -> Result<Link> {
    if x.len() != params.dim() {
        return Err(Error::Dimension(format!("covariate vector of length {} for d = {}", x.len(), params.dim())));
    }
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::Domain(format!("depth must be positive, got {depth}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite covariate".into()));
    }
    Ok(link_unchecked(params, x, depth.ln()))
}

#[inline]
pub(crate) fn link_unchecked(params: &ZipgParams, x: &[f64], log_depth: f64) -> Link {
    let (eta, eta_star) = predictors(params, x, log_depth);
    let (ce, c1) = clamp_exp(eta);
    let (cs, c2) = clamp_exp(eta_star);
    Link { lambda: ce, theta: cs, pi: logistic(params.gamma), clamped: c1 || c2 }
}

#[inline]
pub(crate) fn predictors(params: &ZipgParams, x: &[f64], log_depth: f64) -> (f64, f64) {
    let mut eta = params.beta0 + log_depth;
    let mut eta_star = params.beta0_star;
    for ((xk, b), bs) in x.iter().zip(&params.beta).zip(&params.beta_star) {
        eta += xk * b;
        eta_star += xk * bs;
    }
    (eta, eta_star)
}

#[inline]
fn clamp_exp(v: f64) -> (f64, bool) {
    if v > EXPONENT_CLAMP {
        (EXPONENT_CLAMP.exp(), true)
    } else if v < -EXPONENT_CLAMP {
        ((-EXPONENT_CLAMP).exp(), true)
    } else {
        (v.exp(), false)
    }
}

/// Serialize floats as shortest round-trip decimal strings.
mod decimal {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:?}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

mod decimal_vec {
    use serde::{de::Error as _, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&format!("{x:?}"))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<String>::deserialize(d)?.iter().map(|s| s.parse().map_err(D::Error::custom)).collect()
    }
}
