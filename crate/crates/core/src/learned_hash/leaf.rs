//! Leaf predictors of the second model stage.
//!
//! Every leaf sees its keys through a normalized position `u` in `[0, 1]`
//! supplied by the router, so coefficients stay well conditioned no matter
//! how wide the key domain is. Parameters are kept at `f32` precision in
//! memory so that wire round trips are bit-exact.

use std::fmt;

/// Leaf model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeafFamily {
    Linear,
    Cubic,
    /// Piecewise-linear table over `2^prefix_bits` equal sub-buckets of the
    /// leaf's position range, storing the rank offset at every bucket edge.
    RadixTable { prefix_bits: u8 },
}

impl LeafFamily {
    pub const DEFAULT_RADIX_BITS: u8 = 1;
    pub const MAX_RADIX_BITS: u8 = 12;

    pub fn radix() -> Self {
        LeafFamily::RadixTable {
            prefix_bits: Self::DEFAULT_RADIX_BITS,
        }
    }

    /// Number of `f32` parameters a leaf of this family carries on the wire.
    pub fn param_count(&self) -> usize {
        match self {
            LeafFamily::Linear => 2,
            LeafFamily::Cubic => 4,
            LeafFamily::RadixTable { prefix_bits } => (1usize << prefix_bits) + 1,
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            LeafFamily::Linear => 0x01,
            LeafFamily::Cubic => 0x02,
            LeafFamily::RadixTable { prefix_bits } => 0x10 | prefix_bits,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0x01 => Some(LeafFamily::Linear),
            0x02 => Some(LeafFamily::Cubic),
            t if t & 0xf0 == 0x10 && (t & 0x0f) <= Self::MAX_RADIX_BITS => {
                Some(LeafFamily::RadixTable {
                    prefix_bits: t & 0x0f,
                })
            }
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Some(LeafFamily::Linear),
            "cubic" => Some(LeafFamily::Cubic),
            "radix" | "radixtable" => Some(LeafFamily::radix()),
            other => {
                let bits = other.strip_prefix("radix")?.parse::<u8>().ok()?;
                (bits <= Self::MAX_RADIX_BITS).then_some(LeafFamily::RadixTable { prefix_bits: bits })
            }
        }
    }
}

impl fmt::Display for LeafFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeafFamily::Linear => write!(f, "linear"),
            LeafFamily::Cubic => write!(f, "cubic"),
            LeafFamily::RadixTable { prefix_bits } if *prefix_bits == Self::DEFAULT_RADIX_BITS => {
                write!(f, "radix")
            }
            LeafFamily::RadixTable { prefix_bits } => write!(f, "radix{prefix_bits}"),
        }
    }
}

/// Two-field correction applied on top of a leaf: `pred * scale + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub offset: f64,
    pub scale: f64,
}

impl Default for Anchor {
    fn default() -> Self {
        Anchor {
            offset: 0.0,
            scale: 1.0,
        }
    }
}

impl Anchor {
    pub fn is_identity(&self) -> bool {
        self.offset == 0.0 && self.scale == 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeafParams {
    Linear { slope: f64, intercept: f64 },
    /// Coefficients `[c0, c1, c2, c3]` of `c0 + c1 u + c2 u^2 + c3 u^3`.
    Cubic([f64; 4]),
    /// Rank at each of the `2^bits + 1` bucket edges.
    Radix { bits: u8, offsets: Vec<f64> },
}

#[inline]
pub(crate) fn f32_round(x: f64) -> f64 {
    x as f32 as f64
}

impl LeafParams {
    pub fn family(&self) -> LeafFamily {
        match self {
            LeafParams::Linear { .. } => LeafFamily::Linear,
            LeafParams::Cubic(_) => LeafFamily::Cubic,
            LeafParams::Radix { bits, .. } => LeafFamily::RadixTable { prefix_bits: *bits },
        }
    }

    /// Constant prediction `value` in the given family.
    pub fn constant(family: LeafFamily, value: f64) -> Self {
        match family {
            LeafFamily::Linear => LeafParams::Linear {
                slope: 0.0,
                intercept: value,
            },
            LeafFamily::Cubic => LeafParams::Cubic([value, 0.0, 0.0, 0.0]),
            LeafFamily::RadixTable { prefix_bits } => LeafParams::Radix {
                bits: prefix_bits,
                offsets: vec![value; (1usize << prefix_bits) + 1],
            },
        }
    }

    /// Raw polynomial / table value at `u`.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            LeafParams::Linear { slope, intercept } => intercept + slope * u,
            LeafParams::Cubic(c) => ((c[3] * u + c[2]) * u + c[1]) * u + c[0],
            LeafParams::Radix { bits, offsets } => {
                let (i, w) = radix_cell(*bits, u);
                offsets[i] * (1.0 - w) + offsets[i + 1] * w
            }
        }
    }

    /// Running maximum of the leaf function over `[0, u]`, which is what the
    /// hash path evaluates. Identical to `eval` for the monotone families.
    pub fn eval_monotone(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            LeafParams::Cubic(c) => {
                let mut best = self.eval(0.0).max(self.eval(u));
                // Local maxima of the cubic inside (0, u).
                let (a, b, cc) = (3.0 * c[3], 2.0 * c[2], c[1]);
                let mut roots = [f64::NAN; 2];
                if a.abs() < 1e-300 {
                    if b.abs() > 1e-300 {
                        roots[0] = -cc / b;
                    }
                } else {
                    let disc = b * b - 4.0 * a * cc;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        roots[0] = (-b - sq) / (2.0 * a);
                        roots[1] = (-b + sq) / (2.0 * a);
                    }
                }
                for r in roots {
                    if r > 0.0 && r < u {
                        best = best.max(self.eval(r));
                    }
                }
                best
            }
            _ => self.eval(u),
        }
    }

    /// Partial derivatives of `eval(u)` w.r.t. each parameter, in wire order.
    pub fn basis(&self, u: f64) -> Vec<f64> {
        match self {
            LeafParams::Linear { .. } => vec![u, 1.0],
            LeafParams::Cubic(_) => vec![u * u * u, u * u, u, 1.0],
            LeafParams::Radix { bits, offsets } => {
                let mut g = vec![0.0; offsets.len()];
                let (i, w) = radix_cell(*bits, u);
                g[i] += 1.0 - w;
                g[i + 1] += w;
                g
            }
        }
    }

    /// Parameters in wire order: Linear (slope, intercept), Cubic (c3, c2,
    /// c1, c0), RadixTable (edge offsets ascending).
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            LeafParams::Linear { slope, intercept } => vec![*slope, *intercept],
            LeafParams::Cubic(c) => vec![c[3], c[2], c[1], c[0]],
            LeafParams::Radix { offsets, .. } => offsets.clone(),
        }
    }

    /// Inverse of [`LeafParams::to_vec`]; `values.len()` must match the family.
    pub fn from_slice(family: LeafFamily, values: &[f64]) -> Self {
        assert_eq!(values.len(), family.param_count());
        match family {
            LeafFamily::Linear => LeafParams::Linear {
                slope: values[0],
                intercept: values[1],
            },
            LeafFamily::Cubic => LeafParams::Cubic([values[3], values[2], values[1], values[0]]),
            LeafFamily::RadixTable { prefix_bits } => LeafParams::Radix {
                bits: prefix_bits,
                offsets: values.to_vec(),
            },
        }
    }

    /// Restore the family's structural invariants and round to `f32`.
    pub(crate) fn normalize(&mut self) {
        match self {
            LeafParams::Linear { slope, intercept } => {
                if !(*slope >= 0.0) {
                    *slope = 0.0;
                }
                *slope = f32_round(*slope);
                *intercept = f32_round(*intercept);
            }
            LeafParams::Cubic(c) => {
                for v in c.iter_mut() {
                    *v = f32_round(*v);
                }
            }
            LeafParams::Radix { offsets, .. } => {
                let mut run = f64::NEG_INFINITY;
                for v in offsets.iter_mut() {
                    run = run.max(*v);
                    *v = f32_round(run);
                }
            }
        }
    }

    /// Remove floating-point residue from closed-form fits: values within
    /// `1e-9` (relative) of an integer become that integer.
    pub(crate) fn snap_integers(&mut self) {
        let fix = |v: &mut f64| {
            let r = v.round();
            if (*v - r).abs() <= 1e-9 * (1.0 + v.abs()) {
                *v = r;
            }
        };
        match self {
            LeafParams::Linear { slope, intercept } => {
                fix(slope);
                fix(intercept);
            }
            LeafParams::Cubic(c) => c.iter_mut().for_each(fix),
            LeafParams::Radix { offsets, .. } => offsets.iter_mut().for_each(fix),
        }
    }

    /// Fold an anchor into the parameters, exactly for every family.
    pub(crate) fn fold(&self, anchor: Anchor) -> LeafParams {
        let Anchor { offset, scale } = anchor;
        match self {
            LeafParams::Linear { slope, intercept } => LeafParams::Linear {
                slope: slope * scale,
                intercept: intercept * scale + offset,
            },
            LeafParams::Cubic(c) => {
                LeafParams::Cubic([c[0] * scale + offset, c[1] * scale, c[2] * scale, c[3] * scale])
            }
            LeafParams::Radix { bits, offsets } => LeafParams::Radix {
                bits: *bits,
                offsets: offsets.iter().map(|v| v * scale + offset).collect(),
            },
        }
    }
}

/// Cell index and interpolation weight of `u` in a radix table.
#[inline]
fn radix_cell(bits: u8, u: f64) -> (usize, f64) {
    let cells = 1usize << bits;
    let x = u.clamp(0.0, 1.0) * cells as f64;
    let i = (x.floor() as usize).min(cells - 1);
    (i, x - i as f64)
}

/// One second-stage model: predictor, local anchor and owned rank interval.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafModel {
    pub params: LeafParams,
    pub anchor: Anchor,
    pub rank_lo: u64,
    pub rank_hi: u64,
    /// Model version at which the parameters last changed.
    pub stamp: u32,
}

impl LeafModel {
    pub fn family(&self) -> LeafFamily {
        self.params.family()
    }

    /// Anchored raw prediction, before monotone envelope and clamping.
    pub fn raw(&self, u: f64) -> f64 {
        self.params.eval(u) * self.anchor.scale + self.anchor.offset
    }

    /// Clamped rank prediction used by the hash.
    pub fn predict(&self, u: f64) -> f64 {
        let r = self.params.eval_monotone(u) * self.anchor.scale + self.anchor.offset;
        let r = if r.is_nan() { self.rank_lo as f64 } else { r };
        snap(r.clamp(self.rank_lo as f64, self.rank_hi as f64))
    }

    /// Squared-error loss of the raw prediction against `target`.
    pub fn loss(&self, u: f64, target: f64) -> f64 {
        let e = self.raw(u) - target;
        e * e
    }

    /// Gradient of [`LeafModel::loss`] w.r.t. the parameters (wire order).
    pub fn loss_gradient(&self, u: f64, target: f64) -> Vec<f64> {
        let e = self.raw(u) - target;
        let k = 2.0 * e * self.anchor.scale;
        self.params.basis(u).into_iter().map(|b| k * b).collect()
    }

    /// Parameters with the anchor folded in, as sent on the wire.
    pub fn exported_params(&self) -> LeafParams {
        if self.anchor.is_identity() {
            self.params.clone()
        } else {
            let mut p = self.params.fold(self.anchor);
            p.normalize();
            p
        }
    }
}

/// Values within a millionth of an integer are treated as that integer so
/// that exact fits are not knocked off by float noise. Monotone.
#[inline]
fn snap(r: f64) -> f64 {
    let n = r.round();
    if (r - n).abs() < 1e-6 {
        n
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for f in [
            LeafFamily::Linear,
            LeafFamily::Cubic,
            LeafFamily::radix(),
            LeafFamily::RadixTable { prefix_bits: 4 },
        ] {
            assert_eq!(LeafFamily::from_tag(f.tag()), Some(f));
            assert_eq!(LeafFamily::parse(&f.to_string()), Some(f));
        }
        assert_eq!(LeafFamily::from_tag(0x7f), None);
    }

    #[test]
    fn cubic_envelope_is_monotone() {
        // Rises to a bump near u = 0.3, dips, then rises again.
        let p = LeafParams::Cubic([0.0, 30.0, -120.0, 100.0]);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let v = p.eval_monotone(i as f64 / 1000.0);
            assert!(v >= prev);
            prev = v;
        }
        assert!(p.eval(0.5) < p.eval_monotone(0.5));
    }

    #[test]
    fn radix_interpolates_edges() {
        let p = LeafParams::Radix {
            bits: 1,
            offsets: vec![0.0, 10.0, 30.0],
        };
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(0.25), 5.0);
        assert_eq!(p.eval(0.5), 10.0);
        assert_eq!(p.eval(1.0), 30.0);
    }

    #[test]
    fn fold_matches_anchor() {
        let a = Anchor {
            offset: 3.5,
            scale: 1.25,
        };
        for params in [
            LeafParams::Linear {
                slope: 4.0,
                intercept: 2.0,
            },
            LeafParams::Cubic([1.0, -2.0, 0.5, 3.0]),
            LeafParams::Radix {
                bits: 2,
                offsets: vec![0.0, 1.0, 4.0, 9.0, 16.0],
            },
        ] {
            let folded = params.fold(a);
            for i in 0..=20 {
                let u = i as f64 / 20.0;
                let want = params.eval(u) * a.scale + a.offset;
                assert!((folded.eval(u) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_enforces_invariants() {
        let mut p = LeafParams::Linear {
            slope: -3.0,
            intercept: 0.1,
        };
        p.normalize();
        assert_eq!(
            p,
            LeafParams::Linear {
                slope: 0.0,
                intercept: 0.1f32 as f64
            }
        );
        let mut r = LeafParams::Radix {
            bits: 1,
            offsets: vec![5.0, 2.0, 9.0],
        };
        r.normalize();
        assert_eq!(r.to_vec(), vec![5.0, 5.0, 9.0]);
    }
}
