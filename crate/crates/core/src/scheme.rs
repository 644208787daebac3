//! Adaptive update schemes.
//!
//! Every scheme turns the gradient stream `g_1, ..., g_t` of one block into
//! a mean estimate `phi_t` and a non-negative scale `psi_t`; the adaptive
//! gradient step is then `x - alpha_t * phi_t / psi_t`.
//!
//! | scheme     | `phi_t`               | `psi_t`                            |
//! |------------|-----------------------|------------------------------------|
//! | `PgmPlain` | `g_t`                 | `1`                                |
//! | `AdaGrad`  | `g_t`                 | `sqrt(sum_i g_i^2 / t)`            |
//! | `Adam`     | `m_t / (1 - b1^t)`    | `sqrt(v_t / (1 - b2^t)) + eps`     |
//! | `AmsGrad`  | `m_t`                 | `sqrt(vhat_t)`, `vhat_t = max(vhat_{t-1}, v_t)` |
//! | `AdamX`    | `m_t`                 | like AMSGrad, `vhat_{t-1}` rescaled by `(1-b1_t)^2/(1-b1_{t-1})^2` |
//! | `PAdam`    | `m_t`                 | `vhat_t^p`                         |
//!
//! with `m_t = b1_t m_{t-1} + (1 - b1_t) g_t` and
//! `v_t = b2 v_{t-1} + (1 - b2) g_t^2`.
//!
//! AdaGrad averages the squared gradients over `t` rather than using the
//! plain running sum, which rescales the effective step by `sqrt(t)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "pgm_plain")]
    PgmPlain,
    #[serde(rename = "adagrad")]
    AdaGrad,
    #[serde(rename = "adam")]
    Adam,
    #[serde(rename = "amsgrad")]
    AmsGrad,
    #[serde(rename = "adamx")]
    AdamX,
    #[serde(rename = "padam")]
    PAdam,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::PgmPlain,
        Scheme::AdaGrad,
        Scheme::Adam,
        Scheme::AmsGrad,
        Scheme::AdamX,
        Scheme::PAdam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::PgmPlain => "pgm_plain",
            Scheme::AdaGrad => "adagrad",
            Scheme::Adam => "adam",
            Scheme::AmsGrad => "amsgrad",
            Scheme::AdamX => "adamx",
            Scheme::PAdam => "padam",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme '{s}'")))
    }
}

/// First-moment decay `beta_{1,t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta1Schedule {
    Constant(f64),
    /// `beta1 * decay^(t-1)`.
    Geometric { beta1: f64, decay: f64 },
}

impl Beta1Schedule {
    /// Value at iteration `t >= 1`. `t = 0` returns the `t = 1` value.
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            Beta1Schedule::Constant(b) => b,
            Beta1Schedule::Geometric { beta1, decay } => {
                beta1 * decay.powi(t.saturating_sub(1).min(i32::MAX as u64) as i32)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (b, decay) = match *self {
            Beta1Schedule::Constant(b) => (b, 1.0),
            Beta1Schedule::Geometric { beta1, decay } => (beta1, decay),
        };
        if !(0.0..1.0).contains(&b) {
            return Err(Error::InvalidConfig(format!("beta1 must lie in [0, 1), got {b}")));
        }
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta1 decay must lie in (0, 1], got {decay}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub beta1: Beta1Schedule,
    pub beta2: f64,
    pub eps: f64,
    /// PAdam exponent; ignored by every other scheme.
    pub p: f64,
}

impl SchemeConfig {
    /// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`, `p = 0.125`.
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            beta1: Beta1Schedule::Constant(0.9),
            beta2: 0.999,
            eps: 1e-8,
            p: 0.125,
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = Beta1Schedule::Constant(beta1);
        self.beta2 = beta2;
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.beta1.validate()?;
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig(format!(
                "beta2 must lie in [0, 1), got {}",
                self.beta2
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps must be positive, got {}", self.eps)));
        }
        if self.scheme == Scheme::PAdam && !(self.p > 0.0 && self.p <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "PAdam exponent p must lie in (0, 1/2], got {}",
                self.p
            )));
        }
        Ok(())
    }
}

/// Moment accumulators of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    block: String,
    t: u64,
    pub m: Array2<f64>,
    pub v: Array2<f64>,
    pub v_hat: Array2<f64>,
    pub g_sq_sum: Array2<f64>,
    beta1_prod: f64,
    beta2_pow: f64,
    prev_beta1: f64,
}

impl SchemeState {
    pub fn new(block: impl Into<String>, shape: (usize, usize)) -> Self {
        Self {
            block: block.into(),
            t: 0,
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            v_hat: Array2::zeros(shape),
            g_sq_sum: Array2::zeros(shape),
            beta1_prod: 1.0,
            beta2_pow: 1.0,
            prev_beta1: 0.0,
        }
    }

    /// Number of gradients absorbed so far; the next update is iteration
    /// `iteration() + 1`.
    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn block(&self) -> &str {
        &self.block
    }

    /// Absorbs gradient `g` as iteration `t = iteration() + 1` and returns
    /// `(phi_t, psi_t)`.
    pub fn update(&mut self, g: &Array2<f64>, cfg: &SchemeConfig) -> Result<(Array2<f64>, Array2<f64>)> {
        check_shape(
            &format!("scheme update of block '{}'", self.block),
            self.m.shape(),
            g.shape(),
        )?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                block: self.block.clone(),
                what: "gradient".into(),
            });
        }

        self.t += 1;
        let t = self.t;

        match cfg.scheme {
            Scheme::PgmPlain => Ok((g.clone(), Array2::ones(g.raw_dim()))),
            Scheme::AdaGrad => {
                Zip::from(&mut self.g_sq_sum).and(g).for_each(|s, &gi| *s += gi * gi);
                let inv_t = 1.0 / t as f64;
                let psi = self.g_sq_sum.mapv(|s| (s * inv_t).sqrt());
                Ok((g.clone(), psi))
            }
            Scheme::Adam => {
                let b1 = cfg.beta1.at(t);
                let b2 = cfg.beta2;
                self.accumulate_moments(g, b1, b2);
                self.beta1_prod *= b1;
                self.beta2_pow *= b2;
                let c1 = 1.0 - self.beta1_prod;
                let c2 = 1.0 - self.beta2_pow;
                let phi = self.m.mapv(|m| m / c1);
                let eps = cfg.eps;
                let psi = self.v.mapv(|v| (v / c2).sqrt() + eps);
                Ok((phi, psi))
            }
            Scheme::AmsGrad | Scheme::AdamX | Scheme::PAdam => {
                let b1 = cfg.beta1.at(t);
                self.accumulate_moments(g, b1, cfg.beta2);
                let rescale = if cfg.scheme == Scheme::AdamX && t > 1 {
                    let r = (1.0 - b1) / (1.0 - self.prev_beta1);
                    r * r
                } else {
                    1.0
                };
                Zip::from(&mut self.v_hat)
                    .and(&self.v)
                    .for_each(|vh, &v| *vh = (rescale * *vh).max(v));
                self.prev_beta1 = b1;

                let psi = if cfg.scheme == Scheme::PAdam && cfg.p != 0.5 {
                    let p = cfg.p;
                    self.v_hat.mapv(|vh| vh.powf(p))
                } else {
                    self.v_hat.mapv(f64::sqrt)
                };
                Ok((self.m.clone(), psi))
            }
        }
    }

    fn accumulate_moments(&mut self, g: &Array2<f64>, b1: f64, b2: f64) {
        Zip::from(&mut self.m)
            .and(&mut self.v)
            .and(g)
            .for_each(|m, v, &gi| {
                *m = b1 * *m + (1.0 - b1) * gi;
                *v = b2 * *v + (1.0 - b2) * gi * gi;
            });
    }
}

/// Free-function form of [`SchemeState::update`].
pub fn scheme_update(
    state: &mut SchemeState,
    g: &Array2<f64>,
    cfg: &SchemeConfig,
) -> Result<(Array2<f64>, Array2<f64>)> {
    state.update(g, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn scalar(x: f64) -> Array2<f64> {
        array![[x]]
    }

    #[test]
    fn adam_first_step_is_sign_like() {
        let cfg = SchemeConfig::new(Scheme::Adam);
        let mut st = SchemeState::new("x", (1, 1));
        let (phi, psi) = st.update(&scalar(4.0), &cfg).unwrap();
        assert!((st.m[[0, 0]] - 0.4).abs() < 1e-15);
        assert!((phi[[0, 0]] - 4.0).abs() < 1e-12);
        assert!((psi[[0, 0]] - (4.0 + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn pgm_plain_is_identity_row() {
        let cfg = SchemeConfig::new(Scheme::PgmPlain);
        let mut st = SchemeState::new("x", (1, 3));
        let g = array![[1.0, -2.0, 0.5]];
        let (phi, psi) = st.update(&g, &cfg).unwrap();
        assert_eq!(phi, g);
        assert_eq!(psi, Array2::ones((1, 3)));
    }

    #[test]
    fn amsgrad_keeps_running_max() {
        let cfg = SchemeConfig::new(Scheme::AmsGrad);
        let mut st = SchemeState::new("x", (1, 1));
        st.update(&scalar(1.0), &cfg).unwrap();
        assert!((st.v[[0, 0]] - 0.001).abs() < 1e-15);
        let (_, psi) = st.update(&scalar(0.0), &cfg).unwrap();
        assert!((st.v[[0, 0]] - 0.000999).abs() < 1e-15);
        assert!((st.v_hat[[0, 0]] - 0.001).abs() < 1e-15);
        assert!((psi[[0, 0]] - 0.001f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn adagrad_averages_over_t() {
        let cfg = SchemeConfig::new(Scheme::AdaGrad);
        let mut st = SchemeState::new("x", (1, 1));
        st.update(&scalar(3.0), &cfg).unwrap();
        let (phi, psi) = st.update(&scalar(4.0), &cfg).unwrap();
        assert_eq!(phi[[0, 0]], 4.0);
        assert!((psi[[0, 0]] - (25.0f64 / 2.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn adamx_differs_from_amsgrad_under_decaying_beta1() {
        let mut cfg = SchemeConfig::new(Scheme::AdamX);
        cfg.beta1 = Beta1Schedule::Geometric { beta1: 0.9, decay: 0.5 };
        let mut ams_cfg = cfg.clone();
        ams_cfg.scheme = Scheme::AmsGrad;
        let mut a = SchemeState::new("x", (1, 1));
        let mut b = SchemeState::new("x", (1, 1));
        let stream = [1.0, 0.1, 0.1, 0.1];
        let mut differs = false;
        for g in stream {
            let (_, pa) = a.update(&scalar(g), &cfg).unwrap();
            let (_, pb) = b.update(&scalar(g), &ams_cfg).unwrap();
            differs |= pa != pb;
        }
        assert!(differs);
    }

    #[test]
    fn errors_name_the_block() {
        let cfg = SchemeConfig::new(Scheme::Adam);
        let mut st = SchemeState::new("S", (1, 2));
        let err = st.update(&array![[1.0, f64::NAN]], &cfg).unwrap_err();
        assert_eq!(
            err,
            Error::NonFinite {
                block: "S".into(),
                what: "gradient".into()
            }
        );
        assert!(matches!(
            st.update(&array![[1.0]], &cfg),
            Err(Error::ShapeMismatch { .. })
        ));
        // rejected gradients do not advance the state
        assert_eq!(st.iteration(), 0);
    }

    #[test]
    fn config_validation() {
        assert!(SchemeConfig::new(Scheme::Adam).validate().is_ok());
        assert!(SchemeConfig::new(Scheme::Adam).with_betas(1.0, 0.9).validate().is_err());
        assert!(SchemeConfig::new(Scheme::Adam).with_betas(0.9, 1.0).validate().is_err());
        assert!(SchemeConfig::new(Scheme::Adam).with_eps(0.0).validate().is_err());
        assert!(SchemeConfig::new(Scheme::PAdam).with_p(0.6).validate().is_err());
        assert!(SchemeConfig::new(Scheme::PAdam).with_p(0.5).validate().is_ok());
        // p is only checked for PAdam
        assert!(SchemeConfig::new(Scheme::Adam).with_p(3.0).validate().is_ok());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("rmsprop".parse::<Scheme>().is_err());
    }

    fn stream_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..30)
    }

    fn run(cfg: &SchemeConfig, stream: &[Vec<f64>]) -> Vec<(Array2<f64>, Array2<f64>)> {
        let mut st = SchemeState::new("x", (2, 2));
        stream
            .iter()
            .map(|g| {
                let g = Array2::from_shape_vec((2, 2), g.clone()).unwrap();
                st.update(&g, cfg).unwrap()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn psi_is_nonnegative(stream in stream_strategy(), idx in 0usize..6) {
            let cfg = SchemeConfig::new(Scheme::ALL[idx]);
            for (_, psi) in run(&cfg, &stream) {
                prop_assert!(psi.iter().all(|&p| p >= 0.0));
            }
        }

        #[test]
        fn amsgrad_vhat_is_monotone(stream in stream_strategy()) {
            let cfg = SchemeConfig::new(Scheme::AmsGrad);
            let mut st = SchemeState::new("x", (2, 2));
            let mut prev = Array2::<f64>::zeros((2, 2));
            for g in &stream {
                let g = Array2::from_shape_vec((2, 2), g.clone()).unwrap();
                st.update(&g, &cfg).unwrap();
                prop_assert!(st.v_hat.iter().zip(prev.iter()).all(|(a, b)| a >= b));
                prev = st.v_hat.clone();
            }
        }

        #[test]
        fn adamx_matches_amsgrad_with_constant_beta1(stream in stream_strategy(), b1 in 0.0f64..0.99) {
            let ams = SchemeConfig::new(Scheme::AmsGrad).with_betas(b1, 0.999);
            let adx = SchemeConfig::new(Scheme::AdamX).with_betas(b1, 0.999);
            prop_assert_eq!(run(&ams, &stream), run(&adx, &stream));
        }

        #[test]
        fn padam_half_matches_amsgrad(stream in stream_strategy()) {
            let ams = SchemeConfig::new(Scheme::AmsGrad);
            let pad = SchemeConfig::new(Scheme::PAdam).with_p(0.5);
            prop_assert_eq!(run(&ams, &stream), run(&pad, &stream));
        }

        #[test]
        fn updates_are_deterministic(stream in stream_strategy(), idx in 0usize..6) {
            let cfg = SchemeConfig::new(Scheme::ALL[idx]);
            prop_assert_eq!(run(&cfg, &stream), run(&cfg, &stream));
        }
    }
}
