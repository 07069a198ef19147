//! Porter-Duff *over* accumulation.

use super::tf::Rgba;

/// Running front-to-back result. `color` is premultiplied by coverage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accumulated {
    pub color: [f64; 3],
    pub alpha: f64,
}

impl Accumulated {
    pub const EMPTY: Accumulated = Accumulated { color: [0.0; 3], alpha: 0.0 };

    /// Adds a sample behind everything accumulated so far:
    /// `C += (1 - A) * a_i * c_i`, `A += (1 - A) * a_i`.
    #[inline]
    pub fn push_behind(&mut self, s: Rgba) {
        let w = (1.0 - self.alpha) * s.a;
        self.color[0] += w * s.r;
        self.color[1] += w * s.g;
        self.color[2] += w * s.b;
        self.alpha = (self.alpha + w).min(1.0);
    }

    /// `self` over `back`, both already composited.
    pub fn over(&self, back: &Accumulated) -> Accumulated {
        let t = 1.0 - self.alpha;
        Accumulated {
            color: std::array::from_fn(|i| self.color[i] + t * back.color[i]),
            alpha: self.alpha + t * back.alpha,
        }
    }

    /// Un-premultiplied color; transparent black when nothing accumulated.
    pub fn straight(&self) -> Rgba {
        if self.alpha <= 0.0 {
            return Rgba::TRANSPARENT;
        }
        let un = |c: f64| (c / self.alpha).clamp(0.0, 1.0);
        Rgba::new(un(self.color[0]), un(self.color[1]), un(self.color[2]), self.alpha.min(1.0))
    }

    pub fn to_rgba8(&self) -> [u8; 4] {
        let s = self.straight();
        let q = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        [q(s.r), q(s.g), q(s.b), q(s.a)]
    }
}

/// Composites samples ordered nearest to farthest.
pub fn composite_front_to_back(samples: &[Rgba]) -> Accumulated {
    let mut acc = Accumulated::EMPTY;
    for &s in samples {
        acc.push_behind(s);
    }
    acc
}

/// Reference back-to-front pass over the same nearest-to-farthest list:
/// `C = a_i * c_i + (1 - a_i) * C`, visiting the farthest sample first.
pub fn composite_back_to_front(samples: &[Rgba]) -> Accumulated {
    let mut acc = Accumulated::EMPTY;
    for s in samples.iter().rev() {
        let t = 1.0 - s.a;
        acc.color = [
            s.a * s.r + t * acc.color[0],
            s.a * s.g + t * acc.color[1],
            s.a * s.b + t * acc.color[2],
        ];
        acc.alpha = s.a + t * acc.alpha;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_transparent() {
        assert_eq!(composite_front_to_back(&[]), Accumulated::EMPTY);
    }

    #[test]
    fn opaque_front_sample_wins() {
        let c = Rgba::new(0.2, 0.4, 0.6, 1.0);
        let acc = composite_front_to_back(&[c, Rgba::new(1.0, 1.0, 1.0, 1.0)]);
        assert_eq!(acc.color, [0.2, 0.4, 0.6]);
        assert_eq!(acc.alpha, 1.0);
    }

    #[test]
    fn two_half_transparent_grays() {
        // C = 0.5*1.0 + 0.5*0.5*0.0, A = 0.5 + 0.5*0.5
        let acc = composite_front_to_back(&[Rgba::gray(1.0, 0.5), Rgba::gray(0.0, 0.5)]);
        assert_eq!(acc.color, [0.5; 3]);
        assert_eq!(acc.alpha, 0.75);
    }

    fn arb_rgba() -> impl Strategy<Value = Rgba> {
        (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0)
            .prop_map(|(r, g, b, a)| Rgba::new(r, g, b, a))
    }

    proptest! {
        #[test]
        fn concatenation_is_over(a in prop::collection::vec(arb_rgba(), 0..40),
                                 b in prop::collection::vec(arb_rgba(), 0..40)) {
            let whole: Vec<Rgba> = a.iter().chain(&b).copied().collect();
            let direct = composite_front_to_back(&whole);
            let split = composite_front_to_back(&a).over(&composite_front_to_back(&b));
            for i in 0..3 {
                prop_assert!((direct.color[i] - split.color[i]).abs() < 1e-12);
            }
            prop_assert!((direct.alpha - split.alpha).abs() < 1e-12);
        }

        #[test]
        fn alpha_monotone_and_bounded(s in prop::collection::vec(arb_rgba(), 0..256)) {
            let mut acc = Accumulated::EMPTY;
            for x in s {
                let before = acc.alpha;
                acc.push_behind(x);
                prop_assert!(acc.alpha >= before && acc.alpha <= 1.0);
            }
        }
    }
}
