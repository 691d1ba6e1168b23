use ddc_ident::game::*;
use ddc_ident::model::{solve_bellman, SingleAgentModel, SolveOptions};
use ddc_ident::restrictions::numerical_rank;
use ddc_ident::scenarios::{build_entry_game, entry_game_design, EntryGameConfig};
use ddc_ident::Tolerances;
use nalgebra::{DMatrix, DVector};

fn reference() -> (GameModel, MpeSolution) {
    let g = build_entry_game(&EntryGameConfig::default()).unwrap();
    let mpe = solve_mpe(&g, MpeOptions::default(), None).unwrap();
    (g, mpe)
}

fn two_firm(beta: [f64; 2], theta_fc: [f64; 2]) -> GameModel {
    let cfg = EntryGameConfig {
        theta_fc: theta_fc.to_vec(),
        beta: beta.to_vec(),
        ..EntryGameConfig::default()
    };
    build_entry_game(&cfg).unwrap()
}

#[test]
fn equilibrium_is_deterministic_and_tight() {
    let (g, a) = reference();
    let b = solve_mpe(&g, MpeOptions::default(), None).unwrap();
    assert!(a.residual <= 1e-10);
    assert_eq!(a.p, b.p);
    for p in &a.p {
        for col in p.column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
        assert!(p.min() > 0.0);
    }
}

#[test]
fn symmetric_firms_play_symmetrically() {
    let g = two_firm([0.9, 0.9], [1.0, 1.0]);
    let mpe = solve_mpe(&g, MpeOptions::default(), None).unwrap();
    let l = g.layout();
    for x in 0..l.m_x() {
        let (s, lag) = l.state(x);
        let swapped = l.state_index(s, &[lag[1], lag[0]]);
        for k in 0..2 {
            assert!((mpe.p[0][(k, x)] - mpe.p[1][(k, swapped)]).abs() < 1e-12);
        }
    }
}

#[test]
fn expected_objects_match_enumeration() {
    let (g, mpe) = reference();
    let l = g.layout();
    for i in 0..3 {
        let e = expected_objects(&g, &mpe.p, i).unwrap();
        for x in 0..l.m_x() {
            assert!((e.p_minus.row(x).sum() - 1.0).abs() < 1e-12);
            for k in 0..2 {
                let mut direct = 0.0;
                for a in 0..l.n_profiles() {
                    let prof = l.profile(a);
                    if prof[i] != k {
                        continue;
                    }
                    let w: f64 = (0..3).filter(|&j| j != i).map(|j| mpe.p[j][(prof[j], x)]).product();
                    direct += w * g.payoff[i][a][x];
                }
                assert!((direct - e.pi_star[(k, x)]).abs() < 1e-13);
            }
        }
        for q in &e.q_star {
            for r in q.row_iter() {
                assert!((r.sum() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn uniform_rivals_give_uniform_profiles() {
    let g = two_firm([0.9, 0.9], [1.0, 0.9]);
    let e = expected_objects(&g, &uniform_start(&g), 0).unwrap();
    assert!(e.p_minus.iter().all(|&v| (v - 0.5).abs() < 1e-15));
}

#[test]
fn one_firm_game_is_a_single_agent_problem() {
    let cfg = EntryGameConfig {
        theta_fc: vec![0.7],
        beta: vec![0.85],
        ..EntryGameConfig::default()
    };
    let g = build_entry_game(&cfg).unwrap();
    let mpe = solve_mpe(&g, MpeOptions::default(), None).unwrap();
    let e = expected_objects(&g, &mpe.p, 0).unwrap();
    let u: Vec<DVector<f64>> = e.pi_star.row_iter().map(|r| r.transpose()).collect();
    let m = SingleAgentModel::new(u, e.q_star, 0.85).unwrap();
    let sol = solve_bellman(&m, SolveOptions::default()).unwrap();
    for k in 0..2 {
        let d = (mpe.p[0].row(k).transpose() - &sol.ccps.probabilities()[k]).amax();
        assert!(d < 1e-10);
    }
}

#[test]
fn system_holds_at_truth_only() {
    let (g, mpe) = reference();
    for i in 0..3 {
        let sys = build_system(&g, &mpe, i).unwrap();
        let pi = g.pi_vector(i);
        let tol = 1e-8 * sys.scale();
        assert!(sys.residual(&pi, g.beta[i]).amax() <= tol);
        assert!(sys.residual(&pi, 0.5).amax() > tol);
        assert!(sys.r2.evaluate(&pi).unwrap().amax() < 1e-14);
    }
}

#[test]
fn zero_discount_slice_is_static() {
    let (g, mpe) = reference();
    let sys = build_system(&g, &mpe, 0).unwrap();
    let e = expected_objects(&g, &mpe.p, 0).unwrap();
    let y0 = sys.y1.eval(0.0);
    let psi = mpe.psi(0);
    for x in 0..g.layout().m_x() {
        let want = -psi[0][x] + psi[1][x] + e.pi_star[(1, x)];
        assert!((y0[x] - want).abs() < 1e-12);
    }
    assert_eq!(sys.det.eval(0.0), 1.0);
    let pi = recover_game_payoffs(&sys, None, 0.0).unwrap();
    assert!((&sys.pbar * &pi - &y0).amax() < 1e-10);
}

#[test]
fn missing_reference_payoff_is_rejected() {
    let (mut g, mpe) = reference();
    g.known_reference_payoff = false;
    assert!(build_system(&g, &mpe, 0).is_err());
}

#[test]
fn determinant_positive_below_one() {
    let (g, mpe) = reference();
    for i in 0..3 {
        let sys = build_system(&g, &mpe, i).unwrap();
        assert!((0..1001).all(|t| sys.det.eval(t as f64 / 1001.0) > 0.0));
    }
}

#[test]
fn payoffs_recovered_at_truth() {
    let (g, mpe) = reference();
    let l = g.layout();
    for i in 0..3 {
        let sys = build_system(&g, &mpe, i).unwrap();
        let pi = recover_game_payoffs(&sys, None, g.beta[i]).unwrap();
        assert!((pi - g.pi_vector(i)).amax() < 1e-7);
        let wrong = recover_game_payoffs(&sys, None, 0.5).unwrap();
        assert!(r3_exchangeability(&l, i).evaluate(&wrong).unwrap().amax() > 1e-6);
    }
}

#[test]
fn exchangeability_identifies_each_firm() {
    let (g, mpe) = reference();
    let l = g.layout();
    let tol = Tolerances::default();
    for i in 0..3 {
        let sys = build_system(&g, &mpe, i).unwrap();
        let (set, gp) = identified_set_game(&sys, &r3_exchangeability(&l, i), &tol).unwrap();
        assert_eq!(set.combined.len(), 1);
        assert!((set.combined[0] - g.beta[i]).abs() < 1e-6);
        assert_eq!(gp.system.len(), 6);
        for p in &gp.system.polys {
            let n = p.normalized();
            assert!(n.eval(g.beta[i]).abs() < 1e-6);
            assert!(n.eval(1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn adjustment_cost_rows_carry_no_information_here() {
    let (g, mpe) = reference();
    let l = g.layout();
    let sys = build_system(&g, &mpe, 1).unwrap();
    let rs = r3_adjustment_cost(&l, 1);
    assert_eq!(numerical_rank(&rs.r), 9);
    let err = identified_set_game(&sys, &rs, &Tolerances::default()).unwrap_err();
    assert_eq!(err, ddc_ident::Error::NoIdentifyingContent);
    let gp = game_poly_system(&sys, &rs, None).unwrap();
    assert_eq!(gp.n_independent, 0);
}

#[test]
fn interaction_term_breaks_adjustment_cost_rows() {
    let mut g = build_entry_game(&EntryGameConfig::default()).unwrap();
    let l = g.layout();
    for a in 0..l.n_profiles() {
        let prof = l.profile(a);
        if prof[0] == 0 && prof[1] == 0 {
            for x in 0..l.m_x() {
                if l.state(x).1[0] == 1 {
                    g.payoff[0][a][x] -= 0.3;
                }
            }
        }
    }
    assert!(r3_adjustment_cost(&l, 0).evaluate(&g.pi_vector(0)).unwrap().amax() > 0.1);
}

#[test]
fn linear_rows_identify_planted_two_firm_game() {
    let g = two_firm([0.7, 0.85], [1.0, 0.9]);
    let mpe = solve_mpe(&g, MpeOptions::default(), None).unwrap();
    let l = g.layout();
    let h = entry_game_design(&g);
    let tol = Tolerances::default();
    for i in 0..2 {
        let rs = r3_linear(&l, i, &h).unwrap();
        assert_eq!(rs.n_rows(), 12 - 4);
        assert!((&rs.r * g.pi_vector(i)).amax() < 1e-10);
        let sys = build_system(&g, &mpe, i).unwrap();
        let (set, _) = identified_set_game(&sys, &rs, &tol).unwrap();
        assert_eq!(set.combined.len(), 1, "{:?}", set.combined);
        assert!((set.combined[0] - g.beta[i]).abs() < 1e-6);
    }
}

#[test]
fn roots_do_not_depend_on_the_chosen_block() {
    let (g, mpe) = reference();
    let l = g.layout();
    let tol = Tolerances::default();
    let sys = build_system(&g, &mpe, 0).unwrap();
    let rs = r3_linear(&l, 0, &entry_game_design(&g)).unwrap();
    let base = game_poly_system(&sys, &rs, None).unwrap();
    let p = l.m_pi();
    let n_rows = p + rs.n_rows();
    let mut x = DMatrix::zeros(n_rows, p);
    x.rows_mut(0, sys.pbar.nrows()).copy_from(&sys.pbar);
    x.rows_mut(sys.pbar.nrows(), sys.r2.n_rows()).copy_from(&sys.r2.r);
    x.rows_mut(p, rs.n_rows()).copy_from(&rs.r);
    // favour the restriction rows so the pivoting picks a different block
    let mut weighted = x.clone();
    weighted.rows_mut(p, rs.n_rows()).scale_mut(50.0);
    let alt = pivoted_rows(&weighted, p);
    assert_ne!(alt, base.x1_rows);
    let other = game_poly_system(&sys, &rs, Some(&alt)).unwrap();
    let a = ddc_ident::ident::common_roots(&base.system, &base.tolerances(&tol)).unwrap();
    let b = ddc_ident::ident::common_roots(&other.system, &other.tolerances(&tol)).unwrap();
    assert_eq!(a.len(), b.len());
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-7, "{u} vs {v}");
    }
}

#[test]
fn rank_deficient_stack_is_reported() {
    let (g, mpe) = reference();
    let mut sys = build_system(&g, &mpe, 0).unwrap();
    sys.r2 = ddc_ident::restrictions::RestrictionSet::empty("none", ddc_ident::restrictions::RestrictionKind::Equality, 96);
    let rs = r3_exchangeability(&g.layout(), 0);
    assert!(matches!(
        game_poly_system(&sys, &rs, None),
        Err(ddc_ident::Error::RankDeficient { .. })
    ));
}

#[test]
fn inequality_rows_are_uninformative() {
    let (g, mpe) = reference();
    let l = g.layout();
    let tol = Tolerances::default();
    let sys = build_system(&g, &mpe, 1).unwrap();
    for r4 in [r4_own_lag(&l, 1), r4_rivals(&l, 1)] {
        assert!(r4.evaluate(&g.pi_vector(1)).unwrap().min() >= 0.0);
        let set = inequality_region_game(&sys, None, &r4, &tol).unwrap();
        let reg = set.inequality_intervals.unwrap();
        assert_eq!(reg.len(), 1);
        assert_eq!((reg[0].lo, reg[0].hi), (0.0, 1.0));
    }
    let vacuous = ddc_ident::restrictions::RestrictionSet::new(
        "vacuous",
        ddc_ident::restrictions::RestrictionKind::InequalityGe,
        DMatrix::zeros(1, l.m_pi()),
        DVector::zeros(1),
    )
    .unwrap();
    let set = inequality_region_game(&sys, None, &vacuous, &tol).unwrap();
    assert_eq!(set.inequality_intervals.unwrap().len(), 1);
}

#[test]
fn pooling_keeps_shared_roots() {
    let mk = |r: Vec<f64>| ddc_ident::ident::IdentifiedSet {
        equality_roots: Some(r.clone()),
        inequality_intervals: None,
        combined: r,
        diagnostics: vec![],
    };
    let sets = [mk(vec![0.3, 0.9]), mk(vec![0.9000001]), mk(vec![0.1, 0.9])];
    assert_eq!(pooled_roots(&sets, 1e-6), vec![0.9]);
    assert!(pooled_roots(&[], 1e-6).is_empty());
}

#[test]
fn mpe_serializes() {
    let (g, mpe) = reference();
    let v: serde_json::Value = serde_json::to_value(&mpe).unwrap();
    assert_eq!(v["p"].as_array().unwrap().len(), 3);
    let back: GameModel = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
    assert_eq!(back.beta, g.beta);
    for i in 0..3 {
        assert!((back.pi_vector(i) - g.pi_vector(i)).amax() < 1e-15);
    }
}

#[test]
fn bad_damping_is_rejected() {
    let (g, _) = reference();
    let opts = MpeOptions {
        damping: 0.0,
        ..MpeOptions::default()
    };
    assert!(solve_mpe(&g, opts, None).is_err());
    let opts = MpeOptions {
        max_iter: 2,
        ..MpeOptions::default()
    };
    match solve_mpe(&g, opts, None) {
        Err(ddc_ident::Error::NonConvergence { trace, .. }) => assert_eq!(trace.len(), 2),
        other => panic!("{other:?}"),
    }
}
