use proptest::prelude::*;

use thinfilm::coefficients::{CoefficientTable, PointCoefficients};
use thinfilm::geometry::{build_frame, CylinderPatch, GapJet, LinearGap, Plane, TorusPatch};
use thinfilm::grid::Grid2D;
use thinfilm::harness::{fitted_slope, ScenarioConfig};
use thinfilm::lubrication::{solve_reynolds, LubricationBc, PressureTrace, SurfaceVelocities};
use thinfilm::new_model::{eliminate_vertical, FieldStack, ModelParams};
use thinfilm::output::fmt17;
use thinfilm::profiles::VectorSpec;
use thinfilm::series::{alpha_beta_series, jacobian_inverse_oracle, series_gradient};
use thinfilm::shallow_water::Physics;

fn gap(h: f64, d1: f64, d2: f64) -> GapJet {
    GapJet { h, dh: [d1, d2], ddh: [[0.0; 2]; 2], ht: 0.0, dht: [0.0; 2] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_numbers_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn slope_of_a_power_law_is_its_exponent(c in 0.01f64..100.0, p in -3.0f64..5.0) {
        let x = [0.2, 0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|e: &f64| c * e.powf(p)).collect();
        prop_assert!((fitted_slope(&x, &y) - p).abs() < 1e-10);
    }

    #[test]
    fn leading_coefficients_hold_on_any_torus(
        r in 1.5f64..5.0,
        x1 in 0.0f64..1.0,
        x2 in 0.0f64..1.0,
        h in 0.5f64..2.0,
        d1 in -0.5f64..0.5,
        d2 in -0.5f64..0.5,
    ) {
        let t = TorusPatch { major_radius: r, minor_radius: 1.0, u_span: 1.0, v_span: 1.0, u_offset: 0.0, v_offset: 0.0 };
        let fr = build_frame(&t, [x1, x2], 0.0).unwrap();
        let pc = PointCoefficients::evaluate(&fr, &gap(h, d1, d2), [x1, x2]).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                let d = if i == k { 1.0 } else { 0.0 };
                prop_assert!((pc.b[0][i][k] - d).abs() < 1e-12);
                prop_assert!((pc.jm[0][0][i][k] - pc.m[i][k] / pc.a0).abs() < 1e-12);
            }
        }
        prop_assert!(pc.a0 > 0.0);
    }

    #[test]
    fn series_error_shrinks_with_eps(radius in 1.5f64..4.0, x2 in 0.0f64..1.0, xi3 in 0.2f64..1.0) {
        let c = CylinderPatch { radius, length: 1.0, span: 1.0, offset: 0.0, omega: 0.0 };
        let fr = build_frame(&c, [0.5, x2], 0.0).unwrap();
        let g = gap(1.0, 0.2, -0.1);
        let s = alpha_beta_series(&fr, &g, 3).unwrap();
        let err = |eps: f64| {
            let a = series_gradient(&s, g.h, eps, xi3, 3);
            let b = jacobian_inverse_oracle(&fr, &g, eps, xi3).unwrap();
            (0..3).flat_map(|l| (0..3).map(move |k| (l, k))).map(|(l, k)| (a[l][k] - b[l][k]).abs()).fold(0.0, f64::max)
        };
        prop_assert!(err(0.05) <= err(0.1) + 1e-15);
    }

    #[test]
    fn valid_epsilons_pass_validation(eps in prop::collection::vec(1.01e-4f64..=0.5, 1..5)) {
        let mut v: serde_json::Value = serde_json::from_str(include_str!("../../../scenarios/slider.json")).unwrap();
        v["epsilons"] = serde_json::json!(eps);
        let c = ScenarioConfig::from_json(&v.to_string()).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reynolds_pressure_is_linear_in_the_wall_speed(speed in 0.1f64..3.0, slope in -0.5f64..0.5) {
        let g = Grid2D::new(9, 9).unwrap();
        let table = CoefficientTable::build(&g, &Plane { length: [1.0, 1.0] }, &LinearGap { h0: 1.0, slope: [slope, 0.0] }, 0.0, 1e-9).unwrap();
        let trace = PressureTrace::default().field(&g, 1.0);
        let solve = |s: f64| {
            let bc = LubricationBc { v: VectorSpec::Uniform { value: [s, 0.0] }, ..Default::default() };
            solve_reynolds(&table, &SurfaceVelocities::from_bc(&g, &bc), &trace, 1.0).unwrap().p
        };
        let (p1, p2) = (solve(1.0), solve(speed));
        prop_assert!(p2.sub(&p1.scale(speed)).max_abs() <= 1e-10 * p2.max_abs().max(1.0));
    }

    #[test]
    fn vertical_elimination_is_idempotent(a in -1.0f64..1.0, b in -1.0f64..1.0, eps in 0.01f64..0.5) {
        let g = Grid2D::new(9, 9).unwrap();
        let c = CylinderPatch { radius: 2.0, length: 1.0, span: 1.0, offset: 0.0, omega: 0.0 };
        let table = CoefficientTable::build(&g, &c, &LinearGap { h0: 1.0, slope: [0.1, 0.0] }, 0.0, 1e-9).unwrap();
        let mut s = FieldStack::zeros(&g, eps, 0.0);
        s.u[0] = VectorSpec::Stream { amplitude: a, wavenumber: [1.0, 1.0] }.fields(&g);
        s.u[1] = VectorSpec::Shear { amplitude: b * eps, wavenumber: 1.0, mean: 0.0 }.fields(&g);
        let params = ModelParams::new(Physics { mu: 1.0, rho0: 1.0 });
        let once = eliminate_vertical(&s, &table, &params).unwrap();
        let twice = eliminate_vertical(&once, &table, &params).unwrap();
        prop_assert_eq!(once.max_diff(&twice), 0.0);
    }
}
