use proptest::prelude::*;
use wavediff_core::isosurface::{marching_cubes, mesh_is_watertight};
use wavediff_core::shapes::{box_mesh, icosphere, sphere_sdf};
use wavediff_core::volume::{sample_analytic_tsdf, sample_tsdf, TsdfConfig, VolumeGrid};

fn within_truncation(v: &VolumeGrid, tau: f64) -> bool {
    v.values().iter().all(|x| x.abs() <= tau)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn analytic_tsdf_is_truncated_and_idempotent(
        cx in -0.2f64..0.2, cy in -0.2f64..0.2, cz in -0.2f64..0.2,
        r in 0.05f64..0.4, tau in 0.01f64..0.2,
    ) {
        let cfg = TsdfConfig { resolution: 16, extent: 0.45, truncation: tau };
        let v = sample_analytic_tsdf(&cfg, sphere_sdf([cx, cy, cz], r)).unwrap();
        prop_assert!(within_truncation(&v, tau));
        let again = v.map(|x| x.clamp(-tau, tau));
        prop_assert_eq!(again.values(), v.values());
    }

    #[test]
    fn mesh_tsdf_is_truncated(
        lo in prop::array::uniform3(-0.4f64..-0.05),
        hi in prop::array::uniform3(0.05f64..0.4),
        tau in 0.02f64..0.2,
    ) {
        let cfg = TsdfConfig { resolution: 8, extent: 0.45, truncation: tau };
        let v = sample_tsdf(&box_mesh(lo, hi), &cfg).unwrap();
        prop_assert!(within_truncation(&v, tau));
        let again = v.map(|x| x.clamp(-tau, tau));
        prop_assert_eq!(again.values(), v.values());
    }

    #[test]
    fn index_location_round_trip(log_n in 1u32..8, extent in 0.01f64..10.0) {
        let n = 1usize << log_n;
        let g = VolumeGrid::zeros(n, extent);
        for i in 0..n {
            prop_assert_eq!(g.nearest_index(g.coord(i)), i);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// Interior samples are random and nonzero; the outer layer is
    /// outside, so the level set never meets the domain boundary.
    #[test]
    fn marching_cubes_output_is_watertight(n in 3usize..9, values in prop::collection::vec(0.01f64..1.0, 512), signs in prop::collection::vec(any::<bool>(), 512)) {
        let mut idx = 0;
        let v = VolumeGrid::from_fn(n, 0.5, |i, j, k| {
            let border = [i, j, k].iter().any(|&c| c == 0 || c == n - 1);
            idx += 1;
            if border {
                1.0
            } else if signs[idx - 1] {
                values[idx - 1]
            } else {
                -values[idx - 1]
            }
        });
        let mesh = marching_cubes(&v, 0.0);
        prop_assert!(mesh_is_watertight(&mesh));
    }
}

#[test]
fn sphere_zero_set_lies_within_a_voxel_diagonal() {
    let cfg = TsdfConfig::with_resolution(64);
    let r = 0.3;
    let v = sample_tsdf(&icosphere(r, 4), &cfg).unwrap();
    let diag = v.voxel_size() * 3f64.sqrt();
    // bisect the trilinear field along rays through the origin
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for s in 0..200 {
        let y = 1.0 - 2.0 * (s as f64 + 0.5) / 200.0;
        let ring = (1.0 - y * y).sqrt();
        let dir = [
            ring * (golden * s as f64).cos(),
            y,
            ring * (golden * s as f64).sin(),
        ];
        let f = |t: f64| v.trilinear([dir[0] * t, dir[1] * t, dir[2] * t]);
        let (mut a, mut b) = (r - 2.0 * diag, r + 2.0 * diag);
        assert!(f(a) < 0.0 && f(b) > 0.0);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        assert!((a - r).abs() <= diag, "root {a} on ray {s}");
    }
}
