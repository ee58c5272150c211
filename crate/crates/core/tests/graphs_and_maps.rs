use liftspec_core::freelimit::{build_l, cp_radius, membership, solve_resolvent, MembershipOptions, ResolventOptions};
use liftspec_core::graphs::{build_colored_graph, count_cycles, is_tangle_free};
use liftspec_core::model::{preset, sample_symmetric};
use liftspec_core::nonbacktracking::b_mu;
use liftspec_core::rng::split_seed;
use liftspec_core::Complex64;

/// Mean number of ℓ-cycles in G^σ stays below 3(d-1)^ℓ.
#[test]
fn cycle_counts_within_envelope() {
    let (n, d, samples) = (500, 4, 200u64);
    for ell in [2usize, 3, 4] {
        let total: usize = (0..samples)
            .map(|s| {
                let pf = sample_symmetric(n, 2, d, split_seed(77, s)).unwrap();
                count_cycles(&build_colored_graph(&pf), ell).unwrap()
            })
            .sum();
        let mean = total as f64 / samples as f64;
        let envelope = 3.0 * ((d - 1) as f64).powi(ell as i32);
        assert!(mean <= envelope, "ℓ={ell}: mean {mean} above {envelope}");
    }
}

fn tangled_fraction(n: usize, d: usize, seeds: u64) -> f64 {
    let ell = (((n as f64).ln() / (4.0 * ((d - 1) as f64).ln())).floor() as usize).max(1);
    let tangled = (0..seeds)
        .filter(|&s| {
            let pf = sample_symmetric(n, d / 2, d, split_seed(n as u64, s)).unwrap();
            !is_tangle_free(&build_colored_graph(&pf), ell).unwrap()
        })
        .count();
    tangled as f64 / seeds as f64
}

#[test]
fn tangles_become_rarer_with_n() {
    let small = tangled_fraction(200, 4, 100);
    let large = tangled_fraction(2000, 4, 100);
    assert!(large <= small, "{large} > {small}");
}

/// Outside σ(A★) the operator B★ at μ is a contraction in spectral radius.
#[test]
fn figure1_outside_spectrum_has_subunit_radius() {
    let ws = preset("figure1").unwrap();
    let opts = ResolventOptions {
        eta_final: 0.0,
        ..ResolventOptions::default()
    };
    let mu = Complex64::new(3.5, 0.0);
    let state = solve_resolvent(&ws, mu, &opts).unwrap();
    let bm = b_mu(&ws, mu, &state).unwrap();
    let rho = cp_radius(&build_l(&bm.weights, &bm.star), 1e-12, 100_000).unwrap().rho.sqrt();
    assert!(rho < 1.0, "{rho}");

    let m = membership(&ws, 3.5, &MembershipOptions::default()).unwrap();
    assert!(!m.member);
    assert!((m.rho - rho).abs() < 1e-3, "{} vs {rho}", m.rho);
}
