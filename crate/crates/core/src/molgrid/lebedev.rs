//! Octahedrally invariant Lebedev sphere nodes, stored as orbit generators.
//!
//! Each rule is a list of orbits of the 48-element octahedral group; the
//! generator parameters and weights follow the published Lebedev-Laikov
//! tables (weights normalised to sum to one). The finite-volume scheme only
//! uses the directions, the weights are kept for quadrature checks.

use crate::error::{Error, Result};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy)]
enum Orbit {
    /// (1, 0, 0): 6 points.
    A1(f64),
    /// (1, 1, 0)/sqrt 2: 12 points.
    A2(f64),
    /// (1, 1, 1)/sqrt 3: 8 points.
    A3(f64),
    /// (l, l, m): 24 points.
    B { l: f64, w: f64 },
    /// (p, q, 0): 24 points.
    C { p: f64, w: f64 },
    /// (r, s, t): 48 points.
    D { r: f64, s: f64, w: f64 },
}

pub const SUPPORTED_ORDERS: [usize; 9] = [6, 14, 26, 38, 50, 86, 110, 146, 194];

/// Polynomial degree integrated exactly by each supported rule.
pub fn exact_degree(order: usize) -> Option<usize> {
    let deg = match order {
        6 => 3,
        14 => 5,
        26 => 7,
        38 => 9,
        50 => 11,
        86 => 15,
        110 => 17,
        146 => 19,
        194 => 23,
        _ => return None,
    };
    Some(deg)
}

fn rule(order: usize) -> Option<&'static [Orbit]> {
    use Orbit::*;
    const R6: &[Orbit] = &[A1(0.166_666_666_666_666_67)];
    const R14: &[Orbit] = &[A1(0.666_666_666_666_666_7e-1), A3(0.75e-1)];
    const R26: &[Orbit] = &[
        A1(0.476_190_476_190_476_2e-1),
        A2(0.380_952_380_952_381e-1),
        A3(0.321_428_571_428_571_4e-1),
    ];
    const R38: &[Orbit] = &[
        A1(0.952_380_952_380_952_4e-2),
        A3(0.321_428_571_428_571_4e-1),
        C { p: 0.459_700_843_380_983_1, w: 0.285_714_285_714_285_7e-1 },
    ];
    const R50: &[Orbit] = &[
        A1(0.126_984_126_984_127e-1),
        A2(0.225_749_559_082_892_4e-1),
        A3(0.210_937_5e-1),
        B { l: 0.301_511_344_577_763_6, w: 0.201_733_355_379_188_7e-1 },
    ];
    const R86: &[Orbit] = &[
        A1(0.115_440_115_440_110_6e-1),
        A3(0.119_439_090_858_544_4e-1),
        B { l: 0.369_602_846_454_151_5, w: 0.111_105_557_106_027_5e-1 },
        B { l: 0.694_354_006_602_663_3, w: 0.118_765_012_945_380_4e-1 },
        C { p: 0.374_243_039_090_339_7, w: 0.118_123_037_469_049_6e-1 },
    ];
    const R110: &[Orbit] = &[
        A1(0.382_827_049_493_716_2e-2),
        A3(0.979_373_751_248_751_2e-2),
        B { l: 0.185_115_635_344_736_2, w: 0.821_173_728_319_111_1e-2 },
        B { l: 0.690_421_048_382_292_2, w: 0.994_281_489_117_810_3e-2 },
        B { l: 0.395_689_473_055_941_9, w: 0.959_547_133_607_096_3e-2 },
        C { p: 0.478_369_028_812_150_2, w: 0.969_499_636_166_302_8e-2 },
    ];
    const R146: &[Orbit] = &[
        A1(0.599_631_368_759_429_5e-3),
        A2(0.737_299_971_864_697_6e-2),
        A3(0.721_051_536_013_080_1e-2),
        B { l: 0.676_441_040_011_277_5, w: 0.711_635_549_312_212_3e-2 },
        B { l: 0.417_496_122_796_375_6, w: 0.675_382_948_629_533_2e-2 },
        B { l: 0.157_467_667_203_361_1, w: 0.757_439_415_906_608_1e-2 },
        D { r: 0.140_355_381_171_550_4, s: 0.449_332_832_326_870_6, w: 0.699_108_735_331_309e-2 },
    ];
    const R194: &[Orbit] = &[
        A1(0.178_234_044_724_461_1e-2),
        A2(0.571_690_594_997_710_2e-2),
        A3(0.557_338_317_884_873_8e-2),
        B { l: 0.671_297_344_269_522_6, w: 0.560_870_408_258_799_7e-2 },
        B { l: 0.289_246_562_757_543_9, w: 0.515_823_771_180_538_3e-2 },
        B { l: 0.444_693_317_871_743_7, w: 0.551_877_146_727_361_4e-2 },
        B { l: 0.129_933_544_765_006_7, w: 0.410_677_702_816_939_4e-2 },
        C { p: 0.345_770_219_761_128_3, w: 0.505_184_606_461_480_8e-2 },
        D { r: 0.159_041_710_538_353, s: 0.836_036_015_482_458_9, w: 0.553_024_891_623_309_4e-2 },
    ];
    Some(match order {
        6 => R6,
        14 => R14,
        26 => R26,
        38 => R38,
        50 => R50,
        86 => R86,
        110 => R110,
        146 => R146,
        194 => R194,
        _ => return None,
    })
}

/// All distinct images of `v` under coordinate permutations and sign flips.
fn octahedral_orbit(v: Vec3) -> Vec<Vec3> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out: Vec<Vec3> = Vec::with_capacity(48);
    for perm in PERMS {
        for signs in 0..8u32 {
            let mut p = [0.0; 3];
            for (axis, &src) in perm.iter().enumerate() {
                let s = if signs >> axis & 1 == 1 { -1.0 } else { 1.0 };
                // +0.0 normalises negative zeros so duplicates compare equal
                p[axis] = s * v[src] + 0.0;
            }
            if !out.iter().any(|q| crate::vec3::dist2(*q, p) < 1e-24) {
                out.push(p);
            }
        }
    }
    out
}

fn expand(orbit: Orbit) -> (Vec<Vec3>, f64) {
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let s3 = 1.0 / 3f64.sqrt();
    match orbit {
        Orbit::A1(w) => (octahedral_orbit([1.0, 0.0, 0.0]), w),
        Orbit::A2(w) => (octahedral_orbit([s2, s2, 0.0]), w),
        Orbit::A3(w) => (octahedral_orbit([s3, s3, s3]), w),
        Orbit::B { l, w } => (octahedral_orbit([l, l, (1.0 - 2.0 * l * l).sqrt()]), w),
        Orbit::C { p, w } => (octahedral_orbit([p, (1.0 - p * p).sqrt(), 0.0]), w),
        Orbit::D { r, s, w } => (octahedral_orbit([r, s, (1.0 - r * r - s * s).sqrt()]), w),
    }
}

/// Lebedev nodes and weights (weights sum to one).
pub fn lebedev_rule(order: usize) -> Result<(Vec<Vec3>, Vec<f64>)> {
    let orbits = rule(order).ok_or_else(|| {
        Error::param(format!(
            "unsupported Lebedev order {order}; supported orders are {SUPPORTED_ORDERS:?}"
        ))
    })?;
    let mut points = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    for &orbit in orbits {
        let (pts, w) = expand(orbit);
        weights.extend(std::iter::repeat_n(w, pts.len()));
        points.extend(pts);
    }
    if points.len() != order {
        return Err(Error::internal(format!(
            "Lebedev rule {order} expanded to {} points",
            points.len()
        )));
    }
    Ok((points, weights))
}

/// Lebedev directions for a supported order.
pub fn lebedev_sphere(order: usize) -> Result<Vec<Vec3>> {
    Ok(lebedev_rule(order)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec3::{dist2, norm};

    /// Mean of x^a y^b z^c over the unit sphere.
    fn sphere_moment(a: i32, b: i32, c: i32) -> f64 {
        if a % 2 != 0 || b % 2 != 0 || c % 2 != 0 {
            return 0.0;
        }
        // double factorial form: (a-1)!!(b-1)!!(c-1)!! / (a+b+c+1)!!
        let df = |n: i32| -> f64 {
            let mut p = 1.0;
            let mut k = n;
            while k > 1 {
                p *= k as f64;
                k -= 2;
            }
            p
        };
        df(a - 1) * df(b - 1) * df(c - 1) / df(a + b + c + 1)
    }

    fn octahedral_ops() -> Vec<Box<dyn Fn(Vec3) -> Vec3>> {
        let mut ops: Vec<Box<dyn Fn(Vec3) -> Vec3>> = Vec::new();
        for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            for signs in 0..8u32 {
                ops.push(Box::new(move |v: Vec3| {
                    let mut out = [0.0; 3];
                    for axis in 0..3 {
                        let s = if signs >> axis & 1 == 1 { -1.0 } else { 1.0 };
                        out[axis] = s * v[perm[axis]];
                    }
                    out
                }));
            }
        }
        ops
    }

    #[test]
    fn small_orders_have_expected_points() {
        let p6 = lebedev_sphere(6).unwrap();
        assert_eq!(p6.len(), 6);
        for p in &p6 {
            assert_eq!(p.iter().filter(|c| c.abs() == 1.0).count(), 1);
        }
        let p14 = lebedev_sphere(14).unwrap();
        let s3 = 1.0 / 3f64.sqrt();
        let diag = p14
            .iter()
            .filter(|p| p.iter().all(|c| (c.abs() - s3).abs() < 1e-15))
            .count();
        assert_eq!(diag, 8);
    }

    #[test]
    fn unsupported_order_lists_supported() {
        let err = lebedev_sphere(7).unwrap_err().to_string();
        assert!(err.contains("194"));
    }

    #[test]
    fn unit_norm_zero_centroid_and_octahedral_closure() {
        let ops = octahedral_ops();
        assert_eq!(ops.len(), 48);
        for order in SUPPORTED_ORDERS {
            let pts = lebedev_sphere(order).unwrap();
            let mut centroid = [0.0; 3];
            for p in &pts {
                assert!((norm(*p) - 1.0).abs() < 1e-12);
                for k in 0..3 {
                    centroid[k] += p[k];
                }
            }
            assert!(norm(centroid) < 1e-12, "order {order}");
            for op in &ops {
                for p in &pts {
                    let q = op(*p);
                    assert!(
                        pts.iter().any(|r| dist2(*r, q) < 1e-24),
                        "order {order} not closed"
                    );
                }
            }
        }
    }

    #[test]
    fn rules_integrate_monomials_exactly() {
        for order in SUPPORTED_ORDERS {
            let deg = exact_degree(order).unwrap() as i32;
            let (pts, w) = lebedev_rule(order).unwrap();
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    for c in 0..=(deg - a - b) {
                        let q: f64 = pts
                            .iter()
                            .zip(&w)
                            .map(|(p, w)| w * p[0].powi(a) * p[1].powi(b) * p[2].powi(c))
                            .sum();
                        let exact = sphere_moment(a, b, c);
                        assert!(
                            (q - exact).abs() < 1e-13,
                            "order {order} monomial ({a},{b},{c}): {q} vs {exact}"
                        );
                    }
                }
            }
        }
    }
}
