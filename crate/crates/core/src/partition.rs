use crate::geometry::Point;
use crate::profile::{smoothstep_jet, Jet3, RadialDerivs};
use crate::scalar::Scalar;

/// psi(r) = 1 on [0, 1], 0 on [2, inf), smooth transition in between.
pub fn cutoff_jet<T: Scalar>(r: Jet3<T>) -> Jet3<T> {
    smoothstep_jet(Jet3::constant(T::c(2.0)) - r)
}

/// Radial dyadic partition of unity: chi_0 = psi(|x|), chi_i = psi(|x|/2^i) - psi(|x|/2^{i-1}).
#[derive(Clone, Debug)]
pub struct DyadicPartition<T> {
    c_chi: T,
}

impl<T: Scalar> Default for DyadicPartition<T> {
    fn default() -> Self {
        build_dyadic_partition()
    }
}

pub fn build_dyadic_partition<T: Scalar>() -> DyadicPartition<T> {
    // Every chi_i with i >= 1 is chi_1 rescaled, so |chi_i|_k 2^{ik} is scale free; scan i = 0 and 1.
    let mut worst = T::zero();
    let proto = DyadicPartition { c_chi: T::one() };
    let n = 20_000;
    for i in 0..2u32 {
        let hi = T::c(2f64.powi(i as i32 + 1));
        for s in 0..=n {
            let r = hi * T::c(s as f64 / n as f64);
            let norms = proto.derivs(i, Point::new(r, T::zero())).norms();
            for (k, v) in norms.iter().enumerate() {
                worst = worst.max(*v * T::c(2f64.powi((i as i32) * k as i32)));
            }
        }
    }
    // Grid maxima can sit between scan nodes; one percent headroom covers that.
    DyadicPartition { c_chi: worst * T::c(1.01) }
}

impl<T: Scalar> DyadicPartition<T> {
    /// Measured smoothness constant C_chi.
    pub fn c_chi(&self) -> T {
        self.c_chi
    }

    pub fn inner_radius(i: u32) -> T {
        if i == 0 { T::zero() } else { T::c(2f64.powi(i as i32 - 1)) }
    }

    pub fn outer_radius(i: u32) -> T {
        T::c(2f64.powi(i as i32 + 1))
    }

    /// chi_i as a jet in r.
    pub fn radial_jet(&self, i: u32, r: T) -> Jet3<T> {
        let rj = Jet3::variable(r);
        let s = T::c(2f64.powi(i as i32)).recip();
        let outer = cutoff_jet(rj.scale(s));
        if i == 0 {
            outer
        } else {
            outer - cutoff_jet(rj.scale(s * T::c(2.0)))
        }
    }

    #[inline]
    pub fn chi(&self, i: u32, x: Point<T>) -> T {
        let r = x.norm();
        if r >= Self::outer_radius(i) || (i > 0 && r <= Self::inner_radius(i)) {
            return T::zero();
        }
        self.radial_jet(i, r).v
    }

    /// sum_{i <= p} chi_i(x) = psi(|x| / 2^p).
    #[inline]
    pub fn cumulative(&self, p: u32, x: Point<T>) -> T {
        cumulative_weight(p, x.norm())
    }

    pub fn derivs(&self, i: u32, x: Point<T>) -> RadialDerivs<T> {
        let r = x.norm();
        if r >= Self::outer_radius(i) || (i > 0 && r <= Self::inner_radius(i)) {
            return RadialDerivs::at(x, Point::origin(), Jet3::zero());
        }
        RadialDerivs::at(x, Point::origin(), self.radial_jet(i, r))
    }

    /// Largest layer index whose support meets the closed disk of radius `r`.
    pub fn layers_reaching(r: T) -> u32 {
        let mut i = 0;
        while Self::inner_radius(i + 1) < r {
            i += 1;
        }
        i
    }
}

#[inline]
pub fn cumulative_weight<T: Scalar>(p: u32, r: T) -> T {
    let t = r / T::c(2f64.powi(p as i32));
    if t <= T::one() {
        T::one()
    } else if t >= T::c(2.0) {
        T::zero()
    } else {
        cutoff_jet(Jet3::constant(t)).v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_to_one_and_origin() {
        let part = build_dyadic_partition::<f64>();
        let x = Point::new(3.7, -1.2);
        let s: f64 = (0..20).map(|i| part.chi(i, x)).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(part.chi(0, Point::origin()), 1.0);
        assert!((1..10).all(|i| part.chi(i, Point::origin()) == 0.0));
    }

    #[test]
    fn scaled_gradient_bound_layer_five() {
        let part = build_dyadic_partition::<f64>();
        let mut worst: f64 = 0.0;
        for a in 0..64 {
            for b in 0..400 {
                let r = 16.0 + 48.0 * b as f64 / 399.0;
                let th = a as f64 * 0.0981;
                let g = part.derivs(5, Point::polar(r, th)).norms()[1];
                worst = worst.max(g * 32.0);
            }
        }
        assert!(worst <= part.c_chi(), "{worst} > {}", part.c_chi());
        assert!(worst > 0.1);
    }

    #[test]
    fn f32_partition_sums_to_one() {
        let part = build_dyadic_partition::<f32>();
        let x = Point::new(5.5f32, 2.0);
        let s: f32 = (0..10).map(|i| part.chi(i, x)).sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
}
