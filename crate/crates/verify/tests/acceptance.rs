//! Acceptance checks, one PASS/FAIL line per criterion.

use ddc_ident::game::{
    build_system, expected_objects, game_poly_system, identified_set_game, inequality_region_game, r3_adjustment_cost,
    r3_exchangeability, r3_linear, r4_own_lag, r4_rivals, solve_mpe, GameIdentSystem, MpeOptions, MpeSolution,
};
use ddc_ident::ident::{
    common_roots, finite_dependence_system, finite_equality_set, finite_inequality_region, region, restriction_system,
    PolySystem,
};
use ddc_ident::model::{recover_payoffs, solve_bellman, Ccps, MasterSystem, SingleAgentModel, SolveOptions, EULER_GAMMA};
use ddc_ident::poly::{adjugate_expansion, roots_in_interval};
use ddc_ident::restrictions::RestrictionSet;
use ddc_ident::scenarios::{
    build_entry_game, build_entry_model, build_entry_model_fd, entry_game_design, EntryGameConfig, EntryModel,
    EntryModelConfig, EntryRestrictions,
};
use ddc_ident::{Interval, Poly, Tolerances};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

struct Entry {
    e: EntryModel,
    ccps: Ccps,
    master: MasterSystem,
}

fn entry(cfg: &EntryModelConfig, fd: bool) -> Entry {
    let e = if fd { build_entry_model_fd(cfg) } else { build_entry_model(cfg) }.expect("entry model");
    let sol = solve_bellman(&e.model, SolveOptions::default()).expect("bellman");
    let master = MasterSystem::from_ccps(&sol.ccps, e.model.transitions()).expect("master");
    Entry {
        e,
        ccps: sol.ccps,
        master,
    }
}

fn roots_near(roots: &[f64], target: f64, tol: f64) -> bool {
    roots.len() == 1 && (roots[0] - target).abs() <= tol
}

fn fmt_intervals(iv: &[Interval<f64>]) -> String {
    let parts: Vec<String> = iv.iter().map(|i| format!("[{:.4}, {:.4}]", i.lo, i.hi)).collect();
    format!("{{{}}}", parts.join(", "))
}

fn criterion_1(m: &Entry, tol: &Tolerances) -> Check {
    let mut notes = Vec::new();
    for (name, rs, rows) in [
        ("homogeneity", &m.e.restrictions.homogeneity, 6),
        ("zero-cross", &m.e.restrictions.zero_cross, 8),
    ] {
        ensure(rs.n_rows() == rows, format!("{name}: {} rows, expected {rows}", rs.n_rows()))?;
        let sys = restriction_system(&m.master, rs).map_err(|e| e.to_string())?;
        let roots = common_roots(&sys, tol).map_err(|e| e.to_string())?;
        ensure(roots_near(&roots, 0.95, 1e-4), format!("{name}: roots {roots:?}"))?;
        let at_one = sys
            .diagnostics(tol)
            .iter()
            .map(|d| d.value_at_one)
            .fold(0.0, f64::max);
        ensure(at_one <= 1e-6, format!("{name}: |p(1)| = {at_one:e}"))?;
        notes.push(format!("{name} roots {:?}, max |p(1)| {at_one:.1e}", roots));
    }
    Ok(notes.join("; "))
}

fn interval_matches(iv: &[Interval<f64>], lo: f64, hi: f64, tol: f64) -> bool {
    iv.len() == 1 && (iv[0].lo - lo).abs() <= tol && (iv[0].hi - hi).abs() <= tol
}

fn criterion_2(m: &Entry, tol: &Tolerances) -> Check {
    let r = &m.e.restrictions;
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, rs, lo, hi) in [
        ("monotonicity", &r.monotonicity, 0.10, 0.95),
        ("concavity", &r.concavity, 0.69, 0.95),
        ("complementarity", &r.complementarity, 0.04, 0.95),
    ] {
        let sys = restriction_system(&m.master, rs).map_err(|e| e.to_string())?;
        let reg = region(&sys, tol);
        let hit = interval_matches(&reg, lo, hi, 0.01);
        ok &= hit;
        notes.push(format!("{name} {} (target [{lo}, {hi}])", fmt_intervals(&reg)));
    }
    if ok {
        Ok(notes.join("; "))
    } else {
        Err(notes.join("; "))
    }
}

fn criterion_3(m: &Entry, tol: &Tolerances) -> Check {
    let rs = &m.e.restrictions.linearity;
    ensure(rs.n_rows() == 14, format!("{} rows", rs.n_rows()))?;
    let sys = restriction_system(&m.master, rs).map_err(|e| e.to_string())?;
    let roots = common_roots(&sys, tol).map_err(|e| e.to_string())?;
    ensure(roots_near(&roots, 0.95, 1e-4), format!("roots {roots:?}"))?;
    Ok(format!("14 rows, roots {roots:?}"))
}

fn fd_system(m: &Entry, rs: &RestrictionSet) -> std::result::Result<PolySystem, String> {
    let psi = m.ccps.psi();
    let (sys, cert) = finite_dependence_system(&psi, m.e.model.transitions(), rs, 4).map_err(|e| e.to_string())?;
    ensure(cert.rho == 1, format!("{}: certified rho {}", rs.label, cert.rho))?;
    Ok(sys)
}

fn criterion_4(m: &Entry, tol: &Tolerances) -> Check {
    let r = &m.e.restrictions;
    let mut notes = Vec::new();
    let mut ok = true;
    let mut worst_high: f64 = 0.0;
    for rs in [&r.homogeneity, &r.zero_cross, &r.linearity, &r.monotonicity, &r.concavity, &r.complementarity] {
        let sys = fd_system(m, rs)?;
        for p in &sys.polys {
            let s = p.scale();
            let high = p.coeffs().iter().skip(2).fold(0.0_f64, |a, c| a.max(c.abs()));
            worst_high = worst_high.max(if s > 0.0 { high / s } else { 0.0 });
        }
    }
    ok &= worst_high <= 1e-10;
    notes.push(format!("rho = 1 certified, degree-2+ coefficient ratio {worst_high:.1e}"));
    let zc = fd_system(m, &r.zero_cross)?;
    match finite_equality_set(&zc, tol) {
        Ok(set) => {
            ok &= roots_near(&set.combined, 0.95, 1e-6);
            notes.push(format!("zero-cross roots {:?}", set.combined));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("zero-cross: {e}"));
        }
    }
    let mut region_all: Option<Vec<Interval<f64>>> = None;
    let mut each = Vec::new();
    for rs in [&r.monotonicity, &r.concavity, &r.complementarity] {
        let sys = fd_system(m, rs)?;
        let reg = finite_inequality_region(&sys, tol).inequality_intervals.unwrap_or_default();
        each.push(format!("{} {}", rs.label, fmt_intervals(&reg)));
        region_all = Some(match region_all {
            None => reg,
            Some(prev) => intersect(&prev, &reg),
        });
    }
    let reg = region_all.unwrap_or_default();
    ok &= reg.len() == 1 && (reg[0].lo - 0.95).abs() <= 1e-3 && reg[0].hi == 1.0;
    notes.push(format!("inequalities {} ({})", fmt_intervals(&reg), each.join(", ")));
    if ok {
        Ok(notes.join("; "))
    } else {
        Err(notes.join("; "))
    }
}

fn intersect(a: &[Interval<f64>], b: &[Interval<f64>]) -> Vec<Interval<f64>> {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            let lo = x.lo.max(y.lo);
            let hi = x.hi.min(y.hi);
            if lo <= hi {
                out.push(Interval { lo, hi });
            }
        }
    }
    out
}

fn random_stochastic(rng: &mut ChaCha8Rng, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(j, j, |_, _| rng.gen::<f64>() + 0.01);
    for mut r in m.row_iter_mut() {
        let s = r.sum();
        r /= s;
    }
    m
}

fn criterion_5(m: &Entry) -> Check {
    let psi = m.ccps.psi();
    let u = recover_payoffs(&psi, m.e.model.transitions(), 0.95).map_err(|e| e.to_string())?;
    let truth = m.e.model.stacked_payoff();
    let err = (u.values() - truth.values()).amax();
    ensure(err <= 1e-8, format!("entry recovery error {err:e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let j = rng.gen_range(1..=10);
        let k = rng.gen_range(2..=3);
        let beta = rng.gen_range(0.0..0.99);
        let q: Vec<DMatrix<f64>> = (0..k).map(|_| random_stochastic(&mut rng, j)).collect();
        let mut us: Vec<DVector<f64>> = (0..k - 1)
            .map(|_| DVector::from_fn(j, |_, _| rng.gen_range(-2.0..2.0)))
            .collect();
        us.push(DVector::zeros(j));
        let model = SingleAgentModel::new(us, q, beta).map_err(|e| e.to_string())?;
        let sol = solve_bellman(&model, SolveOptions::default()).map_err(|e| e.to_string())?;
        let back = recover_payoffs(&sol.ccps.psi(), model.transitions(), beta).map_err(|e| e.to_string())?;
        worst = worst.max((back.values() - model.stacked_payoff().values()).amax());
    }
    ensure(worst <= 1e-8, format!("random round-trip error {worst:e}"))?;
    Ok(format!("entry error {err:.1e}, 50 random models worst {worst:.1e}"))
}

struct Game {
    mpe: MpeSolution,
    systems: Vec<GameIdentSystem>,
    model: ddc_ident::game::GameModel,
}

fn game() -> std::result::Result<Game, String> {
    let model = build_entry_game(&EntryGameConfig::default()).map_err(|e| e.to_string())?;
    let mpe = solve_mpe(&model, MpeOptions::default(), None).map_err(|e| e.to_string())?;
    let systems = (0..3)
        .map(|i| build_system(&model, &mpe, i))
        .collect::<ddc_ident::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    Ok(Game { mpe, systems, model })
}

fn criterion_6(g: &Game, tol: &Tolerances) -> Check {
    ensure(g.mpe.residual <= 1e-10, format!("MPE residual {:e}", g.mpe.residual))?;
    let l = g.model.layout();
    let h = entry_game_design(&g.model);
    let mut ok = true;
    let mut notes = vec![format!("MPE residual {:.1e} after {} iterations", g.mpe.residual, g.mpe.iterations)];
    for (i, truth) in [0.8, 0.9, 0.95].into_iter().enumerate() {
        let sys = &g.systems[i];
        let lin = r3_linear(&l, i, &h).map_err(|e| e.to_string())?;
        ensure(lin.n_rows() == 20, format!("linearity has {} rows", lin.n_rows()))?;
        let mut parts = Vec::new();
        for rs in [r3_exchangeability(&l, i), r3_adjustment_cost(&l, i), lin] {
            match identified_set_game(sys, &rs, tol) {
                Ok((set, gp)) => {
                    let hit = roots_near(&set.combined, truth, 1e-3);
                    ok &= hit;
                    parts.push(format!(
                        "{} {:?} ({} independent)",
                        rs.label, set.combined, gp.n_independent
                    ));
                }
                Err(e) => {
                    ok = false;
                    parts.push(format!("{}: {e}", rs.label));
                }
            }
        }
        notes.push(format!("firm {} target {truth}: {}", i + 1, parts.join(", ")));
    }
    if ok {
        Ok(notes.join("; "))
    } else {
        Err(notes.join("; "))
    }
}

fn criterion_7(g: &Game, tol: &Tolerances) -> Check {
    let l = g.model.layout();
    let mut notes = Vec::new();
    let mut ok = true;
    for i in 0..3 {
        for r4 in [r4_own_lag(&l, i), r4_rivals(&l, i)] {
            for r3 in [None, Some(r3_exchangeability(&l, i))] {
                let set = inequality_region_game(&g.systems[i], r3.as_ref(), &r4, tol).map_err(|e| e.to_string())?;
                let reg = set.inequality_intervals.unwrap_or_default();
                let covers = reg.iter().any(|iv| iv.lo <= 0.0 && iv.hi >= 0.99);
                ok &= covers;
                if !covers || i == 0 {
                    notes.push(format!(
                        "firm {} {}{} {}",
                        i + 1,
                        r4.label,
                        if r3.is_some() { "+R3" } else { "" },
                        fmt_intervals(&reg)
                    ));
                }
            }
        }
    }
    if ok {
        Ok(notes.join("; "))
    } else {
        Err(notes.join("; "))
    }
}

/// Every sign change on a fine grid brackets a reported root, and every
/// reported root sits in a bracket or at a local extremum touching zero.
fn grid_oracle(p: &Poly<f64>, tol: &Tolerances) -> std::result::Result<(), String> {
    let p = p.normalized();
    if p.is_zero() {
        return Ok(());
    }
    let roots = roots_in_interval(&p, 0.0, 1.0, tol).map_err(|e| e.to_string())?;
    let n = 100_000;
    let h = 1.0 / n as f64;
    let vals: Vec<f64> = (0..n).map(|i| p.eval(i as f64 * h)).collect();
    let slack = 2.0 * h + 1e-7;
    for i in 0..n - 1 {
        if vals[i] == 0.0 || vals[i].signum() != vals[i + 1].signum() {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            if 1.0 - b < 1e-6 {
                continue;
            }
            ensure(
                roots.iter().any(|r| *r >= a - slack && *r <= b + slack),
                format!("sign change in [{a}, {b}] without a root; roots {roots:?}"),
            )?;
        }
    }
    let dp = p.derivative();
    for &r in &roots {
        let i = ((r / h) as usize).min(n - 2);
        let lo = i.saturating_sub(2);
        let hi = (i + 3).min(n - 1);
        let bracketed = (lo..hi).any(|j| vals[j] == 0.0 || vals[j].signum() != vals[j + 1].signum());
        let touching = dp.eval(r).abs() <= 1e-4;
        ensure(bracketed || touching, format!("root {r} has no sign change nearby"))?;
    }
    Ok(())
}

fn criterion_8(m: &Entry, fd: &Entry, g: &Game, tol: &Tolerances) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let j = rng.gen_range(2..=12);
        let q = random_stochastic(&mut rng, j);
        let (adj, det) = adjugate_expansion(&q).map_err(|e| e.to_string())?;
        for b in [0.0, 0.3, 0.77, 0.99] {
            let a = DMatrix::identity(j, j) - &q * b;
            let lhs = &a * adj.eval(b);
            let rhs = DMatrix::identity(j, j) * det.eval(b);
            let err = (lhs - rhs).amax();
            ensure(err <= 1e-8, format!("adjugate identity error {err:e} at {b}"))?;
        }
        let min_det = (0..1001).map(|i| det.eval(i as f64 / 1001.0)).fold(f64::INFINITY, f64::min);
        ensure(min_det > 0.0, format!("det not positive: {min_det:e}"))?;
    }

    for i in 0..3 {
        let e = expected_objects(&g.model, &g.mpe.p, i).map_err(|e| e.to_string())?;
        for q in &e.q_star {
            let dev = q.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
            ensure(dev <= 1e-12, format!("firm {} Q* row sum off by {dev:e}", i + 1))?;
        }
        let p = &g.mpe.p[i];
        ensure(p.min() > 0.0, format!("firm {} has a zero probability", i + 1))?;
        let psi = g.mpe.psi(i);
        let v = &g.mpe.value[i];
        for k in 0..p.nrows() {
            let lhs = v - &g.mpe.choice_values[i][k];
            let err = (lhs - &psi[k]).amax();
            ensure(err <= 1e-10, format!("firm {} logit identity error {err:e}", i + 1))?;
            let err2 = (&psi[k] - p.row(k).transpose().map(|v| EULER_GAMMA - v.ln())).amax();
            ensure(err2 == 0.0, "psi mismatch".into())?;
        }
    }

    let mut n_polys = 0;
    for name in EntryRestrictions::NAMES {
        for (mm, label) in [(m, "entry"), (fd, "entry-fd")] {
            let rs = mm.e.restrictions.get(name).ok_or("unknown restriction set")?;
            let sys = restriction_system(&mm.master, rs).map_err(|e| e.to_string())?;
            for p in &sys.polys {
                grid_oracle(p, tol).map_err(|e| format!("{label} {name}: {e}"))?;
                n_polys += 1;
            }
        }
    }
    let l = g.model.layout();
    for i in 0..3 {
        for rs in [r3_exchangeability(&l, i), r3_adjustment_cost(&l, i)] {
            let gp = game_poly_system(&g.systems[i], &rs, None).map_err(|e| e.to_string())?;
            for p in &gp.system.polys {
                grid_oracle(p, tol).map_err(|e| format!("game firm {} {}: {e}", i + 1, rs.label))?;
                n_polys += 1;
            }
        }
    }

    let fr = &fd.e.restrictions;
    let mut agreed = Vec::new();
    for rs in [&fr.homogeneity, &fr.zero_cross, &fr.linearity] {
        let full = common_roots(&restriction_system(&fd.master, rs).map_err(|e| e.to_string())?, tol);
        let short = common_roots(&fd_system(fd, rs)?, tol);
        let same = match (&full, &short) {
            (Ok(a), Ok(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-6),
            (Err(a), Err(b)) => a == b,
            _ => false,
        };
        ensure(same, format!("{}: full {full:?} vs finite {short:?}", rs.label))?;
        agreed.push(match full {
            Ok(r) => format!("{} {r:?}", rs.label),
            Err(_) => format!("{} uninformative", rs.label),
        });
    }
    Ok(format!(
        "adjugate/det on 20 matrices, 3 equilibria, {n_polys} polynomials vs grid, finite vs full: {}",
        agreed.join(", ")
    ))
}

fn main() {
    let tol = Tolerances::default();
    let m = entry(&EntryModelConfig::default(), false);
    let fd = entry(&EntryModelConfig::finite_dependence(), true);
    let g = game();
    let results: Vec<(usize, Check)> = vec![
        (1, criterion_1(&m, &tol)),
        (2, criterion_2(&m, &tol)),
        (3, criterion_3(&m, &tol)),
        (4, criterion_4(&fd, &tol)),
        (5, criterion_5(&m)),
        (6, g.as_ref().map_err(|e| e.clone()).and_then(|g| criterion_6(g, &tol))),
        (7, g.as_ref().map_err(|e| e.clone()).and_then(|g| criterion_7(g, &tol))),
        (8, g.as_ref().map_err(|e| e.clone()).and_then(|g| criterion_8(&m, &fd, g, &tol))),
    ];
    let mut failed = 0;
    for (i, r) in &results {
        match r {
            Ok(msg) => println!("criterion {i}: PASS  {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {i}: FAIL  {msg}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
