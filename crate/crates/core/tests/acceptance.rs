//! Acceptance suite. Each criterion prints one `[PASS]`/`[FAIL]` line with
//! the measured quantities and its runtime; the test fails if any criterion
//! does.

use num_rational::BigRational;
use open_billiard::cocycle::{
    comparison_sequences, delta_recursion, direct_products, finite_difference_poincare, planar_split,
    poincare_product, Base, DeltaTrace, Factor,
};
use open_billiard::geometry::{BilliardTable, Constants};
use open_billiard::lyapunov::{
    bounce_matrices, exponent_from_delta, middle_window, qr_spectrum, spectral_gap_experiment, spectrum_report,
    GapConfig, Method,
};
use open_billiard::orbit::{frame_window, frames, solve_periodic_orbit, Orbit};
use open_billiard::symbolic::{
    choose_window_length, coding, frequency_experiment, is_shift_of, rich_window_experiment, rng_for, Alphabet,
    MarkovMeasure, Sampler, Word,
};
use open_billiard::Frame;
use rand::Rng;
use std::time::{Duration, Instant};

const FD_TOL: f64 = 1e-5;
const AXIS_TOL: f64 = 1e-6;
const DET_TOL: f64 = 1e-10;
const SYMPLECTIC_TOL: f64 = 1e-9;
const COUPLING_TOL: f64 = 1e-10;
const ALIGNMENT_TOL: f64 = 1e-8;
const DELTA_TOL: f64 = 1e-12;
const GAP_SIGMAS: f64 = 5.0;
const FREQUENCY_SIGMAS: f64 = 5.0;
const PAIRING_TOL: f64 = 1e-5;

fn table() -> BilliardTable<f64> {
    BilliardTable::equilateral(1.0, 0.05, Constants { d0: 0.9, r0: 0.05, c1: 0.5, c2: 0.9 })
}

fn word(s: &str) -> Word {
    s.parse().unwrap()
}

fn window(t: &BilliardTable<f64>, w: &Word, m: usize) -> Vec<Frame> {
    frame_window(&solve_periodic_orbit(t, w).unwrap(), t, 0, m).unwrap()
}

/// Twenty cyclically admissible words of lengths 2..=200 drawn from the
/// uniform chain.
fn random_words() -> Vec<Word> {
    let sampler = Sampler::new(&MarkovMeasure::<f64>::uniform(3).unwrap()).unwrap();
    let mut out = vec![];
    let mut stream = 0;
    while out.len() < 20 {
        let mut rng = rng_for(2024, stream);
        stream += 1;
        let len = rng.gen_range(2..=200);
        let w = sampler.sample(len, &mut rng);
        if w.is_cyclically_admissible() {
            out.push(w);
        }
    }
    out
}

fn test_words() -> Vec<Word> {
    let mut v: Vec<Word> = ["1,2,3", "1,2,1,3", "1,2,1,3,2,3", "1,2,1,2,1,3", "1,2,3,1,3,2,3"].map(word).to_vec();
    v.extend(random_words());
    v
}

type Outcome = Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn jacobian_oracle() -> Outcome {
    let t = table();
    let mut worst: f64 = 0.0;
    for m in [5, 10] {
        let fr = window(&t, &word("1,2,3"), m);
        let fd = finite_difference_poincare(&t, &fr, 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(fd.relative_difference(&poincare_product(&fr).map_err(|e| e.to_string())?));
    }
    check(worst <= FD_TOL, format!("max relative difference {worst:.3e} (tol {FD_TOL:e})"))
}

fn axis_period_two() -> Outcome {
    let t = table();
    let exact = ((38.0 + 1440f64.sqrt()) / 2.0).ln();
    let fr = window(&t, &word("1,2"), 400);
    let d = exponent_from_delta(&DeltaTrace::new(&planar_split(&fr).unwrap(), Base::Ones).unwrap()).unwrap();
    let q = qr_spectrum(&bounce_matrices(&fr).unwrap()).unwrap();
    let delta_err = (d.lambda_e.value - exact).abs().max((d.lambda_f.value - exact).abs());
    let qr_err = q
        .exponents
        .iter()
        .zip([exact, exact, -exact, -exact])
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let one = poincare_product(&fr[..1]).unwrap();
    let two = poincare_product(&fr[..2]).unwrap();
    let det_err = (0..2)
        .flat_map(|c| [one.restricted(c) * one.log_scale.exp(), two.restricted(c) * two.log_scale.exp()])
        .map(|b| (b.det() - 1.0).abs())
        .fold(0.0, f64::max);
    check(
        delta_err <= AXIS_TOL && qr_err <= AXIS_TOL && det_err <= DET_TOL,
        format!("exponent {exact:.9}: delta err {delta_err:.2e}, qr err {qr_err:.2e}; |det - 1| {det_err:.2e}"),
    )
}

fn symplecticity() -> Outcome {
    let t = table();
    let mut worst: f64 = 0.0;
    for w in random_words() {
        let fr = window(&t, &w, w.len());
        worst = worst.max(poincare_product(&fr).unwrap().symplectic_defect());
    }
    check(worst <= SYMPLECTIC_TOL, format!("20 orbits, max relative defect {worst:.2e}"))
}

fn block_diagonality() -> Outcome {
    let t = table();
    let mut coupling: f64 = 0.0;
    for w in test_words() {
        for m in [w.len(), 200] {
            coupling = coupling.max(poincare_product(&window(&t, &w, m)).unwrap().ef_coupling());
        }
    }
    let mut aligned = 0;
    let mut worst_alignment: f64 = 0.0;
    for w in test_words() {
        let r = spectrum_report(&window(&t, &w, 300), Method::Delta).map_err(|e| format!("{w}: {e}"))?;
        let (gap, se) = (r.lambda_f.unwrap() - r.lambda_e.unwrap(), r.stderr_e.unwrap().hypot(r.stderr_f.unwrap()));
        if gap > 3.0 * se && !r.degenerate {
            aligned += 1;
            worst_alignment = worst_alignment.max(r.distance_to_f);
        }
    }
    check(
        coupling <= COUPLING_TOL && worst_alignment <= ALIGNMENT_TOL && aligned > 0,
        format!("max coupling {coupling:.2e}; {aligned} orbits with resolved gap, max distance to F {worst_alignment:.2e}"),
    )
}

fn delta_recursion_checks() -> Outcome {
    let mut rng = rng_for(99, 0);
    let random_list = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Factor<f64>> {
        (0..len)
            .map(|_| {
                let d = rng.gen_range(0.05..=1.0);
                Factor::new(d, 1.0 / d + rng.gen_range(0.0..100.0))
            })
            .collect()
    };
    let mut equality: f64 = 0.0;
    for _ in 0..200 {
        let f = random_list(20, &mut rng);
        let logs = delta_recursion(&f, Base::Ones).unwrap();
        let q = |x: f64| BigRational::from_float(x).unwrap();
        let exact = direct_products(&f.iter().map(|f| (q(f.d), q(f.a), q(f.b))).collect::<Vec<_>>(), Base::Ones);
        for j in 0..=20 {
            for k in 0..4 {
                let x = num_traits::ToPrimitive::to_f64(&exact[j][k]).unwrap();
                equality = equality.max((logs[j][k].exp() - x).abs() / x);
            }
        }
    }
    let mut ratio_violations = 0;
    for i in 0..10_000 {
        let f = random_list(1 + i % 50, &mut rng);
        let lift: Vec<f64> = (0..f.len()).map(|_| rng.gen_range(1.0..2.0)).collect();
        let pf = open_billiard::PlanarFactors::from_plain(f, lift);
        let tr = DeltaTrace::new(&pf, Base::Ones).unwrap();
        ratio_violations += (1..=tr.len()).filter(|&j| tr.ratio(j) > 1.0 || tr.ratio_tilde(j) > 1.0).count();
    }
    let t = table();
    let mut floor_violations = 0;
    for w in test_words() {
        let tr = DeltaTrace::new(&planar_split(&window(&t, &w, 300)).unwrap(), Base::Ones).unwrap();
        floor_violations += usize::from(tr.growth_floor_violation(t.constants.d0).is_some());
    }
    check(
        equality <= DELTA_TOL && ratio_violations == 0 && floor_violations == 0,
        format!(
            "direct-product error {equality:.2e}; ratio violations {ratio_violations} in 10^4 lists; growth floor violations {floor_violations}"
        ),
    )
}

fn comparison_construction() -> Outcome {
    let t = table();
    let mut lists: Vec<(String, Vec<Frame>)> =
        test_words().into_iter().map(|w| (w.to_string(), window(&t, &w, 300))).collect();
    lists.push(("1,2,1,3,2,3 unrolled".into(), window(&t, &word("1,2,1,3,2,3"), 10_000)));
    let sampler = Sampler::new(&MarkovMeasure::<f64>::uniform(3).unwrap()).unwrap();
    let sampled = sampler.sample(3 * 1000 + 1, &mut rng_for(17, 0));
    lists.push(("sampled".into(), middle_window(&t, &sampled, 1000).unwrap()));
    let mut min_margin = f64::INFINITY;
    for (name, fr) in &lists {
        let c = comparison_sequences(&planar_split(fr).unwrap(), t.constants.d0).map_err(|e| format!("{name}: {e}"))?;
        min_margin = min_margin.min(c.domination_margin);
    }
    check(min_margin >= 0.0, format!("{} orbits feasible, min domination margin {min_margin:.3}", lists.len()))
}

fn desk_scale_gap() -> Outcome {
    let t = table();
    let mu = MarkovMeasure::<f64>::uniform(3).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let r = pool
        .install(|| spectral_gap_experiment(&t, &mu, GapConfig { m: 96, ensemble_size: 50, seed: 1 }))
        .map_err(|e| e.to_string())?;
    let z = r.z_score.unwrap_or(0.0);
    check(
        z >= GAP_SIGMAS && r.ordered && r.completed == 50,
        format!(
            "mean gap {:.4} +- {:.4} ({z:.1} sigma), min orbit gap {:.4}, failures {}",
            r.mean_gap, r.stderr_gap, r.min_orbit_gap, r.failures
        ),
    )
}

fn symbolic_layer() -> Outcome {
    let mu = MarkovMeasure::<f64>::uniform(3).unwrap();
    let f = frequency_experiment(&mu, &word("1,2"), 1_000_000, 8).unwrap();
    let sigmas = f.abs_err / f.stderr;
    let rich = rich_window_experiment(&mu, 8, 10_000, 8).unwrap();
    let (c, rho) = mu.decay_constants();
    let k = choose_window_length(&mu, c, rho).unwrap().k;
    check(
        sigmas <= FREQUENCY_SIGMAS && rich.passed && k == 4,
        format!(
            "freq {:.5} vs 1/6 ({sigmas:.2} sigma); rich windows {} >= {}; window length {k}",
            f.empirical_freq, rich.count, rich.bound
        ),
    )
}

fn conjugacy() -> Outcome {
    let t = table();
    let mut n = 0;
    for len in 2..=6 {
        for w in Alphabet::new(3).unwrap().words(len).into_iter().filter(Word::is_cyclically_admissible) {
            let o: Orbit<f64> = solve_periodic_orbit(&t, &w).map_err(|e| format!("{w}: {e}"))?;
            let code = |o: &Orbit<f64>| coding(&o.points.iter().map(|p| t.component_at(*p).unwrap().index).collect::<Vec<_>>());
            let original = code(&o).unwrap();
            let advanced = code(&o.advanced()).unwrap();
            if original != w || !is_shift_of(&original, &advanced) {
                return Err(format!("{w}: coded {original}, advanced {advanced}"));
            }
            frames(&o, &t).map_err(|e| format!("{w}: {e}"))?;
            n += 1;
        }
    }
    check(true, format!("{n} periodic words of length <= 6 round-trip"))
}

fn qr_pairing() -> Outcome {
    let t = table();
    let mut worst: f64 = 0.0;
    for w in test_words().into_iter().chain([word("1,2")]) {
        let q = qr_spectrum(&bounce_matrices(&window(&t, &w, 300)).unwrap()).map_err(|e| format!("{w}: {e}"))?;
        worst = worst.max(q.pairing_defect());
    }
    check(worst <= PAIRING_TOL, format!("max |e1 + e4|, |e2 + e3| = {worst:.2e} per bounce"))
}

#[test]
fn acceptance() {
    let criteria = [
        Criterion { id: 1, name: "Jacobian oracle equivalence", budget: Duration::from_secs(5), run: jacobian_oracle },
        Criterion { id: 2, name: "period-2 closed form", budget: Duration::from_secs(1), run: axis_period_two },
        Criterion { id: 3, name: "symplecticity", budget: Duration::from_secs(30), run: symplecticity },
        Criterion { id: 4, name: "planar block-diagonality", budget: Duration::from_secs(60), run: block_diagonality },
        Criterion { id: 5, name: "delta recursion", budget: Duration::from_secs(60), run: delta_recursion_checks },
        Criterion { id: 6, name: "comparison sequences", budget: Duration::from_secs(10), run: comparison_construction },
        Criterion { id: 7, name: "desk-scale spectral gap", budget: Duration::from_secs(300), run: desk_scale_gap },
        Criterion { id: 8, name: "symbolic layer", budget: Duration::from_secs(30), run: symbolic_layer },
        Criterion { id: 9, name: "conjugacy and coding", budget: Duration::from_secs(60), run: conjugacy },
        Criterion { id: 10, name: "QR spectrum pairing", budget: Duration::from_secs(60), run: qr_pairing },
    ];
    let mut failed = vec![];
    for c in criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget {:?}", c.budget)),
            Err(d) => (false, d),
        };
        println!(
            "[{}] {:>2} {}: {} ({:.2} s)",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64()
        );
        if !ok {
            failed.push(c.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
