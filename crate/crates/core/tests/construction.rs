use num_rational::BigRational;
use num_traits::{One, Zero};
use regex::Regex;
use shrink_core::construction::*;
use shrink_core::psi::ApproxFn;
use shrink_core::rational::rational;
use shrink_core::{IfsSpec, SymbolStream};

fn cantor() -> IfsSpec {
    IfsSpec::missing_digit(3, &[0, 2]).unwrap()
}

fn setup_with(ifs: &IfsSpec, x: SymbolStream, b: i64, n_max: u64) -> Setup {
    Setup::new(ifs, &x, &ApproxFn::geometric(rational(b, 1)), n_max).unwrap()
}

fn letters(w: &[u32]) -> String {
    w.iter().map(|&a| char::from(b'a' + a as u8)).collect()
}

/// Builds one anchored regex per clause and reports whether any matches.
fn regex_member(om: &OmegaSet, x: &[u32], w: &[u32]) -> bool {
    let text = letters(w);
    let mut pats = Vec::new();
    for &(s, l) in &om.prefix_patterns {
        pats.push(format!("^{}", letters(&x[s..s + l])));
    }
    for &(o, l) in &om.interior_patterns {
        pats.push(format!("^.{{{o}}}{}", letters(&x[..l])));
    }
    if let Some((a, b)) = om.tail_range {
        for o in a..=b {
            pats.push(format!("^.{{{o}}}{}$", letters(&x[..om.len - o])));
        }
    }
    !pats.iter().any(|p| Regex::new(p).unwrap().is_match(&text))
}

fn all_words(m: u32, len: usize) -> impl Iterator<Item = Vec<u32>> {
    let total = (m as u64).pow(len as u32);
    (0..total).map(move |mut v| {
        let mut w = vec![0u32; len];
        for slot in w.iter_mut().rev() {
            *slot = (v % m as u64) as u32;
            v /= m as u64;
        }
        w
    })
}

fn small_instances(st: &Setup, max_len: usize) -> Vec<OmegaSet> {
    let mut out = Vec::new();
    for p in 1..40u64 {
        let rp = st.rho(p).unwrap();
        for q in p + rp + 3..p + rp + 3 + max_len as u64 {
            let om = OmegaSet::new(st, p, q).unwrap();
            if om.len <= max_len && om.clause_count() > 0 {
                out.push(om);
            }
        }
    }
    out
}

#[test]
fn membership_agrees_with_regex_oracle() {
    let codings = [
        SymbolStream::constant(0),
        SymbolStream::periodic(vec![], vec![0, 1]),
        SymbolStream::periodic(vec![1], vec![0, 0, 1]),
    ];
    let mut checked = 0;
    for x in codings {
        let st = setup_with(&cantor(), x, 3, 400);
        let xs = st.x(200).to_vec();
        for om in small_instances(&st, 10).into_iter().step_by(7) {
            for w in all_words(2, om.len) {
                assert_eq!(om.contains(&w).unwrap(), regex_member(&om, &xs, &w), "p={} q={} w={:?}", om.p, om.q, w);
                checked += 1;
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn membership_agrees_with_regex_on_three_letters() {
    let ifs = IfsSpec::missing_digit(5, &[0, 2, 4]).unwrap();
    let st = setup_with(&ifs, SymbolStream::periodic(vec![], vec![2, 0]), 5, 400);
    let xs = st.x(200).to_vec();
    for om in small_instances(&st, 7).into_iter().step_by(11) {
        for w in all_words(3, om.len) {
            assert_eq!(om.contains(&w).unwrap(), regex_member(&om, &xs, &w));
        }
    }
}

/// Clause events as position constraints `(offset, word)`.
fn events(om: &OmegaSet, x: &[u32]) -> Vec<(usize, Vec<u32>)> {
    let mut ev = Vec::new();
    for &(s, l) in &om.prefix_patterns {
        ev.push((0, x[s..s + l].to_vec()));
    }
    for &(o, l) in &om.interior_patterns {
        ev.push((o, x[..l].to_vec()));
    }
    if let Some((a, b)) = om.tail_range {
        for o in a..=b {
            ev.push((o, x[..om.len - o].to_vec()));
        }
    }
    ev
}

fn inclusion_exclusion_members(om: &OmegaSet, x: &[u32], m: i64) -> i64 {
    let ev = events(om, x);
    assert!(ev.len() <= 16);
    let mut total = 0i64;
    for mask in 0u32..(1 << ev.len()) {
        let mut fixed: Vec<Option<u32>> = vec![None; om.len];
        let mut consistent = true;
        for (i, (o, w)) in ev.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            for (j, &a) in w.iter().enumerate() {
                match fixed[o + j] {
                    Some(b) if b != a => consistent = false,
                    _ => fixed[o + j] = Some(a),
                }
            }
        }
        if !consistent {
            continue;
        }
        let free = fixed.iter().filter(|f| f.is_none()).count() as u32;
        let sign = if mask.count_ones() % 2 == 0 { 1 } else { -1 };
        total += sign * m.pow(free);
    }
    total
}

#[test]
fn member_count_matches_inclusion_exclusion() {
    let st = setup_with(&cantor(), SymbolStream::periodic(vec![], vec![0, 1]), 3, 400);
    let xs = st.x(200).to_vec();
    let mut checked = 0;
    for om in small_instances(&st, 16) {
        if om.clause_count() > 14 {
            continue;
        }
        let count = all_words(2, om.len).filter(|w| om.contains(w).unwrap()).count() as i64;
        assert_eq!(count, inclusion_exclusion_members(&om, &xs, 2), "p={} q={}", om.p, om.q);
        checked += 1;
        if checked >= 40 {
            break;
        }
    }
    assert!(checked >= 10);
}

#[test]
fn exact_rational_dp_matches_counting() {
    let st = setup_with(&cantor(), SymbolStream::constant(0), 3, 400);
    for om in small_instances(&st, 14).into_iter().step_by(5).take(20) {
        let exact = omega_probability_exact(&st, &om).unwrap();
        let count = omega_count_exact(&om).unwrap();
        let expect = BigRational::new(count.into(), num_bigint::BigInt::from(2).pow(om.len as u32));
        assert_eq!(exact, expect);
    }
}

#[test]
fn single_interior_clause_closed_form() {
    // Uniform weights, p small: compare the DP with enumeration and the union bound.
    let st = setup_with(&cantor(), SymbolStream::constant(0), 3, 400);
    let w = st.gibbs().weights();
    for om in small_instances(&st, 16).into_iter().filter(|o| o.len >= 12).take(10) {
        let dp = om.probability(&w);
        let (en, _) = om.enumerate(&w).unwrap();
        assert!((dp - en).abs() < 1e-12);
        let union: f64 = events(&om, st.x(200))
            .iter()
            .map(|(_, e)| 0.5f64.powi(e.len() as i32))
            .sum();
        assert!(dp >= 1.0 - union - 1e-12);
    }
}

#[test]
fn monte_carlo_agrees_with_exact() {
    let st = setup_with(&cantor(), SymbolStream::constant(0), 3, 400);
    let om = small_instances(&st, 16).into_iter().find(|o| o.len == 16).unwrap();
    let w = st.gibbs().weights();
    let exact = om.probability(&w);
    let (mean, err) = om.monte_carlo(&w, 20_000, 7).unwrap();
    assert!((mean - exact).abs() <= err, "{mean} ± {err} vs {exact}");
}

#[test]
fn lower_bound_in_hypothesis() {
    let st = setup_with(&cantor(), SymbolStream::constant(0), 3, 3000);
    let n1 = 33;
    let mut count = 0;
    for p in 34..40u64 {
        let q0 = (p + 2) * (p + 2) + 1;
        for q in [q0, q0 + 17, q0 + 101] {
            let m = omega_measure(&st, n1, p, q, OmegaMethod::Exact).unwrap();
            assert!(m.lower_bound.in_hypothesis);
            assert!(m.respects_bound, "{m:?}");
            count += 1;
        }
    }
    assert!(count >= 18);
}

#[test]
fn nu_weights_are_a_probability_vector() {
    let st = setup_with(&cantor(), SymbolStream::constant(0), 3, 20_000);
    let sch = build_schedule(&st, &ScheduleOptions::relaxed(10_000)).unwrap();
    for level in &sch.levels {
        let exact = nu_exact(&st, level).unwrap().expect("ε ≡ 1 is exact");
        assert!(nu_sums_to_one(&exact));
        let total: f64 = nu_weights(&st, level).unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    let strict = build_schedule(&st, &ScheduleOptions::strict()).unwrap();
    for l in &strict.levels {
        let expect = ((l.m - l.n + 1) as f64).ln();
        assert!(l.log_eps_sum.lo <= expect + 1e-12 && expect - 1e-12 <= l.log_eps_sum.hi);
        assert!(l.log_cond_n.hi < l.log_threshold && l.log_cond_m.hi < l.log_threshold);
    }
}

#[test]
fn sampled_words_realize_exactly_their_hits() {
    let st = setup_with(&cantor(), SymbolStream::constant(0), 3, 20_000);
    let sch = build_schedule(&st, &ScheduleOptions::relaxed(10_000)).unwrap();
    let samples: Vec<EtaSample> = (0..100).map(|seed| sample_eta(&st, &sch, 200, seed).unwrap()).collect();
    for smp in &samples {
        assert_eq!(smp.word.len(), 200);
        assert_eq!(smp.hits, smp.expected_hits(&st).unwrap(), "seed {}", smp.seed);
        let a1 = smp.a_prefix[0] as usize;
        assert!(smp.word[..a1 - 1].iter().all(|&s| s == smp.y) && smp.y != 0);
        let bs = smp.block_symbols[0];
        assert_eq!(smp.word[a1 - 1], bs.omega);
        assert_ne!(bs.omega, bs.omega_forbidden);
        let r = st.rho(a1 as u64).unwrap() as usize;
        assert_eq!(&smp.word[a1..a1 + r], st.x(r));
        assert_eq!(smp.word[a1 + r], bs.tau);
        assert_ne!(bs.tau, bs.tau_forbidden);
    }
    let again = sample_eta(&st, &sch, 200, 5).unwrap();
    assert_eq!(again, samples[5]);
}

#[test]
fn mass_bounds_on_relaxed_cantor() {
    let st = setup_with(&cantor(), SymbolStream::constant(0), 3, 20_000);
    let sch = build_schedule(&st, &ScheduleOptions::relaxed(10_000)).unwrap();
    let samples: Vec<EtaSample> = (0..100).map(|seed| sample_eta(&st, &sch, 200, seed).unwrap()).collect();
    let rep = mass_bound_report(&st, &sch, &samples).unwrap();
    assert_eq!(rep.hit_set_matches, 100);
    assert!(rep.max_log_ratio_coarse.is_finite() && rep.max_log_ratio_fine.is_finite());
    assert!(rep.max_log_ratio_coarse <= rep.predicted_log_constant + 1e-9, "{rep:?}");
    assert!(rep.max_log_ratio_fine <= rep.max_log_ratio_coarse + 1e-9);
    assert!(rep.disjoint_pairs_checked >= 50 && rep.disjoint_pairs_ok == rep.disjoint_pairs_checked);
}

#[test]
fn mass_ratio_grows_by_the_omega_factor() {
    // With equal ratios the coarse-bound ratio at level ℓ+1 is the level-ℓ ratio
    // divided by ℙ(Ω_ℓ), since the ω and τ symbols carry the same weight.
    let st = setup_with(&cantor(), SymbolStream::constant(0), 3, 20_000);
    let sch = build_schedule(&st, &ScheduleOptions::relaxed(10_000)).unwrap();
    let smp = sample_eta(&st, &sch, 700, 3).unwrap();
    assert!(smp.a_prefix.len() >= 3);
    let masses = sample_masses(&st, &sch, &smp).unwrap();
    let at = |k: u64| masses.points.iter().find(|p| p.k == k).unwrap();
    let (a1, a2) = (smp.a_prefix[0], smp.a_prefix[1]);
    let r1 = at(a1).log_mu - at(a1).log_rhs_coarse;
    let r2 = at(a2).log_mu - at(a2).log_rhs_coarse;
    assert!((r2 - r1 + masses.log_omega[0]).abs() < 1e-9, "{r1} {r2} {:?}", masses.log_omega);
}

#[test]
fn mu_inside_deterministic_block_is_product_of_blocks() {
    let st = setup_with(&cantor(), SymbolStream::constant(0), 3, 20_000);
    let sch = build_schedule(&st, &ScheduleOptions::relaxed(10_000)).unwrap();
    let smp = sample_eta(&st, &sch, 700, 11).unwrap();
    let masses = sample_masses(&st, &sch, &smp).unwrap();
    let a2 = smp.a_prefix[1];
    let pt = masses.points.iter().find(|p| p.k == a2 + 3).unwrap();
    let block = &smp.blocks[0];
    let expect = st.gibbs().log_mass(block) - masses.log_omega[0];
    assert!((pt.log_mu - expect).abs() < 1e-9);
    let first = masses.points.iter().find(|p| p.k == smp.a_prefix[0]).unwrap();
    assert!(first.log_mu.abs() < 1e-12);
}

#[test]
fn exact_rational_block_measure_normalizes() {
    let st = setup_with(&cantor(), SymbolStream::constant(0), 3, 400);
    for om in small_instances(&st, 12).into_iter().take(5) {
        let u = st.gibbs().uniform.clone().unwrap();
        let p_omega = omega_probability_exact(&st, &om).unwrap();
        let mut total = BigRational::zero();
        let mut pw = BigRational::one();
        for _ in 0..om.len {
            pw *= &u;
        }
        for w in all_words(2, om.len) {
            if om.contains(&w).unwrap() {
                total += &pw / &p_omega;
            }
        }
        assert!(total.is_one());
    }
}
