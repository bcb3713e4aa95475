use lel_core::exponent_algebra::{classify, jl_curve_q, JlPosition, ParameterTriple, DEFAULT_TOL_CURVE};
use lel_core::hardy_rellich_eig::{
    grid_convergence, ladder, principal_eigenvalue, richardson_limit, singular_stability_verdict, Annulus,
    EigMethod, EigOptions, LadderSpec, Verdict,
};

fn opts() -> EigOptions {
    EigOptions::default()
}

/// For gamma = 0 the symmetric operator is the Toeplitz matrix
/// `(2 - ℓ(S + S^T)) / h^2`; its lowest eigenvalue is known in closed form,
/// and lambda is its square.
fn gamma_zero_discrete(annulus: &Annulus, n: u32) -> f64 {
    let h = annulus.spacing();
    let a = (n as f64 - 2.0) / 2.0;
    let ell = (1.0 - a * a * h * h).sqrt();
    let theta = std::f64::consts::PI / (annulus.nodes + 1) as f64;
    let mu = 2.0 - 2.0 * ell * theta.cos();
    mu * mu / h.powi(4)
}

#[test]
fn gamma_zero_matches_discrete_closed_form() {
    for (lo, hi, m) in [(0.1, 10.0, 64), (1e-3, 1e3, 900), (1e-4, 1e4, 4096)] {
        let a = Annulus::new(lo, hi, m).unwrap();
        let rep = principal_eigenvalue(&a, 11, 0.0, &opts()).unwrap();
        let exact = gamma_zero_discrete(&a, 11);
        assert!((rep.lambda / exact - 1.0).abs() < 1e-9, "{} vs {exact}", rep.lambda);
    }
}

#[test]
fn gamma_zero_example_bracket_with_extrapolation_oracle() {
    let c0 = 410.0625;
    let a = Annulus::new(1e-4, 1e4, 4096).unwrap();
    let lam = principal_eigenvalue(&a, 11, 0.0, &opts()).unwrap().lambda;
    assert!(lam > c0 && lam < 1.02 * c0, "{lam}");

    // Oracle: Richardson in the spacing (second order) ...
    let g = grid_convergence(&a, 11, 0.0, &opts()).unwrap();
    let h_limit = g.lambda[2] + (g.lambda[2] - g.lambda[1]) / 3.0;
    // ... against the continuum value on this annulus, (a^2 + (π/L)^2)^2.
    let l = a.log_width();
    let continuum = (20.25 + (std::f64::consts::PI / l).powi(2)).powi(2);
    assert!((h_limit / continuum - 1.0).abs() < 1e-6, "{h_limit} vs {continuum}");
    assert!(continuum > c0 && continuum < 1.02 * c0);
}

#[test]
fn grid_doubling_ratio_is_second_order() {
    let a = Annulus::new(1e-4, 1e4, 4096).unwrap();
    let g = grid_convergence(&a, 11, 0.0, &opts()).unwrap();
    assert!((3.0..=5.0).contains(&g.ratio), "{}", g.ratio);
}

#[test]
fn nested_annuli_are_monotone() {
    let h = 0.01;
    let mut prev = f64::INFINITY;
    for half in [2.0_f64, 4.0, 8.0, 12.0] {
        let nodes = (2.0 * half / h) as usize - 1;
        let a = Annulus::new((-half).exp(), half.exp(), nodes).unwrap();
        let rep = principal_eigenvalue(&a, 11, 0.4, &opts()).unwrap();
        assert!(rep.lambda < prev);
        assert!(rep.lambda > rep.c_gamma);
        prev = rep.lambda;
    }
}

#[test]
fn gamma_point_four_ladder_approaches_constant() {
    let rep = ladder(11, 0.4, &LadderSpec::default(), &opts()).unwrap();
    assert!((rep.c_gamma - 408.4441).abs() < 1e-9);
    assert!(rep.strictly_decreasing && rep.all_above_c_gamma);
    assert!((rep.extrapolated / rep.c_gamma - 1.0).abs() < 0.01);
    let csv = rep.to_csv();
    assert!(csv.starts_with("k,M,lambda,residual,iterations\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn eigenfunctions_are_positive() {
    let a = Annulus::new(1e-3, 1e3, 2000).unwrap();
    let rep = principal_eigenvalue(&a, 13, 1.0, &opts()).unwrap();
    assert!(rep.phi.iter().chain(rep.psi.iter()).all(|&v| v > 0.0));
    assert_eq!(rep.phi.len(), 2000);
    assert!(rep.residual < 1e-6);
}

#[test]
fn inverse_power_and_shifted_routes_agree() {
    let a = Annulus::new(1e-2, 1e2, 600).unwrap();
    for (n, g) in [(11, 0.0), (11, 0.4), (13, 1.0), (7, 1.8)] {
        let s = principal_eigenvalue(&a, n, g, &opts()).unwrap();
        let p = principal_eigenvalue(
            &a,
            n,
            g,
            &EigOptions {
                method: EigMethod::InversePower,
                ..opts()
            },
        )
        .unwrap();
        assert!((s.lambda / p.lambda - 1.0).abs() < 1e-8, "N={n} γ={g}: {} vs {}", s.lambda, p.lambda);
    }
}

#[test]
fn iteration_cap_is_a_convergence_error() {
    let a = Annulus::new(1e-3, 1e3, 500).unwrap();
    let o = EigOptions {
        method: EigMethod::InversePower,
        max_iter: 2,
        ..opts()
    };
    assert!(matches!(
        principal_eigenvalue(&a, 11, 0.7, &o),
        Err(lel_core::Error::Convergence(_))
    ));
}

#[test]
fn verdicts_follow_the_closed_form_comparison() {
    let unstable = singular_stability_verdict(ParameterTriple::new(3.0, 2.0, 11).unwrap(), &LadderSpec::default(), &opts())
        .unwrap();
    assert_eq!(unstable.verdict, Verdict::SingularUnstable);
    assert!((unstable.k1k2 - 664.9344).abs() < 1e-3);
    assert!(unstable.witness.unwrap().lambda < unstable.k1k2);

    let stable = singular_stability_verdict(ParameterTriple::new(8.0, 8.0, 11).unwrap(), &LadderSpec::default(), &opts())
        .unwrap();
    assert_eq!(stable.verdict, Verdict::SingularStable);
    assert_eq!(classify(stable.params, DEFAULT_TOL_CURVE).jl, JlPosition::AboveCurve);
}

#[test]
fn verdict_flips_across_the_curve() {
    let q = jl_curve_q(11, 12.0, 1e-14).unwrap().q().unwrap();
    let at = |dq: f64| {
        singular_stability_verdict(ParameterTriple::new(12.0, q + dq, 11).unwrap(), &LadderSpec::default(), &opts())
            .unwrap()
            .verdict
    };
    assert_eq!(at(0.0), Verdict::Marginal);
    assert_eq!(at(1e-6), Verdict::SingularStable);
    assert_ne!(at(-1e-6), Verdict::SingularStable);
    assert_eq!(at(-1e-2), Verdict::SingularUnstable);
}

#[test]
fn richardson_on_computed_ladder_improves_top_rung() {
    let rep = ladder(13, 1.0, &LadderSpec::default(), &opts()).unwrap();
    let top = rep.rungs.last().unwrap().lambda;
    assert!((rep.extrapolated - rep.c_gamma).abs() < (top - rep.c_gamma).abs());
    let widths: Vec<f64> = rep.rungs.iter().map(|r| r.annulus.log_width()).collect();
    let lams: Vec<f64> = rep.rungs.iter().map(|r| r.lambda).collect();
    assert_eq!(richardson_limit(&widths, &lams), rep.extrapolated);
}
