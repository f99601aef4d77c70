//! Segmentation-head numerics: deconvolution sizing, the multi-task loss, and
//! the vanilla / weighted / PN / LPN mask losses with analytic gradients.
//!
//! Vanilla and weighted losses are per-pixel means; PN and LPN are sums.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, Mask};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: logits {0:?}, mask {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
}

/// `S_o = s·(S_i − 1) + S_f − 2d` for a transposed convolution.
pub fn deconv_output_size(s_i: usize, s: usize, s_f: usize, d: usize) -> Result<usize, LossError> {
    if s_i < 1 || s < 1 || s_f < 1 {
        return Err(LossError::InvalidConfig(format!(
            "input size, stride and kernel must be ≥ 1, got ({s_i}, {s}, {s_f})"
        )));
    }
    let out = s as i128 * (s_i as i128 - 1) + s_f as i128 - 2 * d as i128;
    if out <= 0 {
        return Err(LossError::InvalidConfig(format!("output size {out} is not positive")));
    }
    usize::try_from(out).map_err(|_| LossError::InvalidConfig("output size overflows".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxOffsets {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

pub fn smooth_l1_loc_loss(t: &BoxOffsets, v: &BoxOffsets) -> f64 {
    smooth_l1(t.x - v.x) + smooth_l1(t.y - v.y) + smooth_l1(t.w - v.w) + smooth_l1(t.h - v.h)
}

/// Softmax cross-entropy of `scores` against the true class index.
pub fn softmax_cross_entropy(scores: &[f64], class: usize) -> Result<f64, LossError> {
    if class >= scores.len() {
        return Err(LossError::InvalidConfig(format!(
            "class {class} out of range for {} scores",
            scores.len()
        )));
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    Ok(lse - scores[class])
}

pub fn total_loss(l_cls: f64, l_loc: f64, l_mask: f64) -> f64 {
    l_cls + l_loc + l_mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Vanilla,
    Weighted,
    Pn,
    Lpn,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] = [Self::Vanilla, Self::Weighted, Self::Pn, Self::Lpn];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Vanilla => "vanilla",
            Self::Weighted => "weighted",
            Self::Pn => "pn",
            Self::Lpn => "lpn",
        }
    }
}

impl std::str::FromStr for LossVariant {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| LossError::InvalidConfig(format!("unknown loss variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Positive-term weight of the weighted variant.
    pub fixed_weight: f64,
    /// Clamp negative LPN weights (more positives than negatives) to zero.
    pub clamp_beta_nonneg: bool,
}

impl LossConfig {
    pub fn new(variant: LossVariant) -> Self {
        Self {
            variant,
            fixed_weight: 1.0,
            clamp_beta_nonneg: false,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if self.variant == LossVariant::Weighted && !(self.fixed_weight > 0.0 && self.fixed_weight.is_finite()) {
            return Err(LossError::InvalidConfig(format!(
                "fixed_weight must be positive, got {}",
                self.fixed_weight
            )));
        }
        Ok(())
    }
}

/// Positive-pixel weight of the balanced losses: `|Y⁻|/|Y⁺|` for PN and its
/// logarithm for LPN, or 1 when the region has no positives. An LPN region
/// without negatives gets 0 instead of `ln 0`.
pub fn pn_beta(n_pos: usize, n_neg: usize, variant: LossVariant) -> f64 {
    if n_pos == 0 {
        return 1.0;
    }
    let ratio = n_neg as f64 / n_pos as f64;
    match variant {
        LossVariant::Lpn if n_neg == 0 => 0.0,
        LossVariant::Lpn => ratio.ln(),
        _ => ratio,
    }
}

/// Weight applied to positive-pixel terms for any variant.
pub fn positive_weight(n_pos: usize, n_neg: usize, cfg: &LossConfig) -> f64 {
    match cfg.variant {
        LossVariant::Vanilla => 1.0,
        LossVariant::Weighted => cfg.fixed_weight,
        LossVariant::Pn | LossVariant::Lpn => {
            let b = pn_beta(n_pos, n_neg, cfg.variant);
            if cfg.clamp_beta_nonneg {
                b.max(0.0)
            } else {
                b
            }
        }
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sum by recursive halving; the result depends only on the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn check_shapes(logits: &Grid<f64>, gt: &Mask) -> Result<(), LossError> {
    if logits.same_shape(gt) {
        Ok(())
    } else {
        Err(LossError::ShapeMismatch(logits.dims(), gt.dims()))
    }
}

fn reduction(cfg: &LossConfig, n: usize) -> f64 {
    match cfg.variant {
        LossVariant::Vanilla | LossVariant::Weighted => 1.0 / n as f64,
        LossVariant::Pn | LossVariant::Lpn => 1.0,
    }
}

pub fn mask_loss(logits: &Grid<f64>, gt: &Mask, cfg: &LossConfig) -> Result<f64, LossError> {
    check_shapes(logits, gt)?;
    cfg.validate()?;
    let n_pos = gt.count();
    let beta = positive_weight(n_pos, gt.as_slice().len() - n_pos, cfg);
    let terms: Vec<f64> = logits
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&a, &y)| if y { beta * softplus(-a) } else { softplus(a) })
        .collect();
    Ok(pairwise_sum(&terms) * reduction(cfg, terms.len()))
}

pub fn mask_loss_grad(logits: &Grid<f64>, gt: &Mask, cfg: &LossConfig) -> Result<Grid<f64>, LossError> {
    check_shapes(logits, gt)?;
    cfg.validate()?;
    let n_pos = gt.count();
    let n = gt.as_slice().len();
    let beta = positive_weight(n_pos, n - n_pos, cfg);
    let scale = reduction(cfg, n);
    Ok(Grid::from_vec(
        logits.width(),
        logits.height(),
        logits
            .as_slice()
            .iter()
            .zip(gt.as_slice())
            .map(|(&a, &y)| {
                if y {
                    -beta * sigmoid(-a) * scale
                } else {
                    sigmoid(a) * scale
                }
            })
            .collect(),
    ))
}

/// `|a − n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Largest relative error between `grad` and central finite differences of
/// `mask_loss` with the given step.
pub fn max_fd_relative_error(
    logits: &Grid<f64>,
    gt: &Mask,
    cfg: &LossConfig,
    grad: &Grid<f64>,
    step: f64,
) -> Result<f64, LossError> {
    let mut probe = logits.clone();
    let mut worst: f64 = 0.0;
    for k in 0..logits.as_slice().len() {
        let a = logits.as_slice()[k];
        probe.as_mut_slice()[k] = a + step;
        let up = mask_loss(&probe, gt, cfg)?;
        probe.as_mut_slice()[k] = a - step;
        let down = mask_loss(&probe, gt, cfg)?;
        probe.as_mut_slice()[k] = a;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(grad.as_slice()[k], numeric));
    }
    Ok(worst)
}

/// One row of a loss report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub variant: LossVariant,
    pub n_pos: usize,
    pub n_neg: usize,
    pub beta: f64,
    pub loss: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "variant,n_pos,n_neg,beta,loss";

    pub fn evaluate(logits: &Grid<f64>, gt: &Mask, cfg: &LossConfig) -> Result<Self, LossError> {
        let n_pos = gt.count();
        let n_neg = gt.as_slice().len() - n_pos;
        Ok(Self {
            variant: cfg.variant,
            n_pos,
            n_neg,
            beta: positive_weight(n_pos, n_neg, cfg),
            loss: mask_loss(logits, gt, cfg)?,
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.variant.name(),
            self.n_pos,
            self.n_neg,
            self.beta,
            self.loss
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, w: usize, h: usize) -> (Grid<f64>, Mask) {
        let logits = Grid::from_fn(w, h, |_, _| rng.gen_range(-4.0..4.0));
        let gt = Grid::from_fn(w, h, |_, _| rng.gen_bool(0.3));
        (logits, gt)
    }

    #[test]
    fn deconv_ladder() {
        assert_eq!(deconv_output_size(14, 2, 2, 0).unwrap(), 28);
        assert_eq!(deconv_output_size(56, 2, 2, 0).unwrap(), 112);
        assert_eq!(deconv_output_size(1, 1, 1, 0).unwrap(), 1);
        assert!(deconv_output_size(1, 1, 1, 1).is_err());
        assert!(deconv_output_size(0, 2, 2, 0).is_err());
    }

    #[test]
    fn smooth_l1_cases() {
        let z = BoxOffsets { x: 0.1, y: -0.2, w: 0.3, h: 0.4 };
        assert_eq!(smooth_l1_loc_loss(&z, &z), 0.0);
        let half = BoxOffsets { w: 0.8, ..z };
        assert!((smooth_l1_loc_loss(&half, &z) - 0.125).abs() < 1e-15);
        let far = BoxOffsets { h: -2.6, ..z };
        assert!((smooth_l1_loc_loss(&far, &z) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn betas() {
        assert_eq!(pn_beta(0, 100, LossVariant::Pn), 1.0);
        assert_eq!(pn_beta(0, 100, LossVariant::Lpn), 1.0);
        assert_eq!(pn_beta(7, 0, LossVariant::Lpn), 0.0);
        assert!((pn_beta(5, 95, LossVariant::Pn) - 19.0).abs() < 1e-12);
        assert!((pn_beta(5, 95, LossVariant::Lpn) - 19f64.ln()).abs() < 1e-12);
        for n in 1..50 {
            assert_eq!(pn_beta(n, n, LossVariant::Pn), 1.0);
            assert_eq!(pn_beta(n, n, LossVariant::Lpn), 0.0);
        }
        let mut cfg = LossConfig::new(LossVariant::Lpn);
        assert!(positive_weight(10, 2, &cfg) < 0.0);
        cfg.clamp_beta_nonneg = true;
        assert_eq!(positive_weight(10, 2, &cfg), 0.0);
    }

    #[test]
    fn softmax_hand_example() {
        // scores (1, 2, 3), class 0: ln(e + e² + e³) − 1.
        let e = std::f64::consts::E;
        let expected = (e + e * e + e * e * e).ln() - 1.0;
        assert!((softmax_cross_entropy(&[1.0, 2.0, 3.0], 0).unwrap() - expected).abs() < 1e-12);
        assert!(softmax_cross_entropy(&[1.0], 1).is_err());
    }

    #[test]
    fn total_loss_sums() {
        assert_eq!(total_loss(0.0, 0.0, 0.0), 0.0);
        assert!((total_loss(0.3, 0.2, 0.5) - 1.0).abs() < 1e-15);
        assert_eq!(total_loss(0.3, 0.2, 0.5), total_loss(0.5, 0.3, 0.2));
    }

    #[test]
    fn saturated_correct_is_near_zero() {
        let logits = Grid::filled(6, 6, 20.0);
        let gt = Mask::filled(6, 6, true);
        let ring = Mask::annulus(6, 6, 2.5, 2.5, 1.0, 2.0);
        let ring_logits = ring.map(|&y| if y { 30.0 } else { -30.0 });
        for v in LossVariant::ALL {
            let cfg = LossConfig::new(v);
            assert!(mask_loss(&logits, &gt, &cfg).unwrap() < 1e-8);
            assert!(mask_loss(&ring_logits, &ring, &cfg).unwrap() < 1e-8);
            for g in [
                mask_loss_grad(&logits, &gt, &cfg).unwrap(),
                mask_loss_grad(&ring_logits, &ring, &cfg).unwrap(),
            ] {
                assert!(g.as_slice().iter().all(|x| x.abs() < 1e-8));
            }
        }
    }

    #[test]
    fn balanced_pn_equals_summed_bce() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logits = Grid::from_fn(4, 4, |_, _| rng.gen_range(-3.0..3.0));
        let gt = Grid::from_fn(4, 4, |x, _| x < 2);
        let pn = mask_loss(&logits, &gt, &LossConfig::new(LossVariant::Pn)).unwrap();
        let vanilla = mask_loss(&logits, &gt, &LossConfig::new(LossVariant::Vanilla)).unwrap();
        assert!((pn - 16.0 * vanilla).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (logits, gt) = random_instance(&mut rng, 4, 4);
        let n_pos = gt.count() as f64;
        let n_neg = 16.0 - n_pos;
        for v in LossVariant::ALL {
            let mut cfg = LossConfig::new(v);
            cfg.fixed_weight = 2.5;
            let beta = match v {
                LossVariant::Vanilla => 1.0,
                LossVariant::Weighted => 2.5,
                LossVariant::Pn => n_neg / n_pos,
                LossVariant::Lpn => (n_neg / n_pos).ln(),
            };
            let mut total = 0.0;
            for y in 0..4 {
                for x in 0..4 {
                    let p = 1.0 / (1.0 + (-logits.get(x, y)).exp());
                    total += if *gt.get(x, y) { -beta * p.ln() } else { -(1.0 - p).ln() };
                }
            }
            if matches!(v, LossVariant::Vanilla | LossVariant::Weighted) {
                total /= 16.0;
            }
            assert!((mask_loss(&logits, &gt, &cfg).unwrap() - total).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (logits, gt) = random_instance(&mut rng, 8, 8);
            for v in LossVariant::ALL {
                let cfg = LossConfig::new(v);
                let g = mask_loss_grad(&logits, &gt, &cfg).unwrap();
                let err = max_fd_relative_error(&logits, &gt, &cfg, &g, 1e-5).unwrap();
                assert!(err < 1e-5, "{v:?}: {err}");
            }
        }
    }

    #[test]
    fn flipping_a_label_flips_the_gradient_sign() {
        let logits = Grid::filled(3, 3, 0.3);
        let mut gt = Mask::filled(3, 3, false);
        gt.set(0, 0, true);
        let cfg = LossConfig::new(LossVariant::Pn);
        let before = mask_loss_grad(&logits, &gt, &cfg).unwrap();
        gt.set(1, 1, true);
        let after = mask_loss_grad(&logits, &gt, &cfg).unwrap();
        assert!(*before.get(1, 1) > 0.0);
        assert!(*after.get(1, 1) < 0.0);
    }

    #[test]
    fn huge_logits_stay_finite() {
        let logits = Grid::from_vec(2, 1, vec![800.0, -800.0]);
        let gt = Grid::from_vec(2, 1, vec![false, true]);
        let l = mask_loss(&logits, &gt, &LossConfig::new(LossVariant::Vanilla)).unwrap();
        assert!((l - 800.0).abs() < 1e-9);
        assert!(matches!(
            mask_loss(&logits, &Mask::filled(1, 1, true), &LossConfig::new(LossVariant::Pn)),
            Err(LossError::ShapeMismatch(..))
        ));
    }
}
