use std::sync::Arc;
use std::time::Instant;

use memrelax_core::dimension_reduction::{
    director_energy, minimize_thin_film, nodal_director, recovery_sequence, PrismField, SweepMode,
};
use memrelax_core::director::{blended_director, cell_min_constrained, feasible_normal, nirf_value, DirectorAssignment};
use memrelax_core::envelope::{
    audit_table, diagonal_slice, four_corner_bound, growth_certificate, EnvelopeTable, LaminationTables,
    SharedDensity,
};
use memrelax_core::fmt::fmt17;
use memrelax_core::pw_affine::{PwAffineField, TriMesh};
use memrelax_core::{w0_bruteforce, w0_closed_form, EnergyModel, ExtValue, Mat32, Vec3};
use serde_json::json;

use crate::config::{gradient, RunConfig};
use crate::error::CliError;
use crate::output::Output;

/// Parses `--xi` columns: `e1`, `-e2`, `2*e1` or `a:b:c`.
pub fn parse_xi(s: &str) -> Result<Mat32, CliError> {
    let bad = |t: &str| CliError::Config(format!("`--xi`: cannot parse column {t:?}"));
    let cols: Vec<&str> = s.split(',').map(str::trim).collect();
    if cols.len() != 2 {
        return Err(CliError::Config(format!("`--xi`: need two columns, got {}", cols.len())));
    }
    let col = |t: &str| -> Result<Vec3, CliError> {
        if t.contains(':') {
            let v: Vec<f64> = t.split(':').map(|x| x.trim().parse().map_err(|_| bad(t))).collect::<Result<_, _>>()?;
            return if v.len() == 3 { Ok(Vec3([v[0], v[1], v[2]])) } else { Err(bad(t)) };
        }
        let (scale, basis) = match t.split_once('*') {
            Some((c, b)) => (c.trim().parse::<f64>().map_err(|_| bad(t))?, b.trim()),
            None => match t.strip_prefix('-') {
                Some(b) => (-1.0, b),
                None => (1.0, t),
            },
        };
        let e = match basis {
            "e1" => Vec3::E1,
            "e2" => Vec3::E2,
            "e3" => Vec3::E3,
            _ => return Err(bad(t)),
        };
        Ok(e * scale)
    };
    Ok(Mat32 {
        cols: [col(cols[0])?, col(cols[1])?],
    })
}

fn model(cfg: &RunConfig) -> Result<EnergyModel, CliError> {
    Ok(EnergyModel::from_spec(cfg.model)?)
}

fn row(xi: &Mat32) -> String {
    xi.to_row_major().iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(",")
}

fn ext(v: ExtValue) -> String {
    fmt17(v.to_f64())
}

fn tables(cfg: &RunConfig, levels: usize) -> Result<Arc<LaminationTables>, CliError> {
    let m = model(cfg)?;
    let density: SharedDensity = Arc::new(move |xi: &Mat32| w0_closed_form(&m, xi).value);
    let t = Instant::now();
    let tables = LaminationTables::build(density, levels, cfg.envelope.search)?;
    println!(
        "lamination tables: {levels} levels on {} stretch nodes in {:.1} s",
        tables.nodes().len(),
        t.elapsed().as_secs_f64()
    );
    Ok(Arc::new(tables))
}

pub fn w0(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let m = model(cfg)?;
    let mut csv = String::from("xi11,xi12,xi21,xi22,xi31,xi32,area,w0,t,zeta1,zeta2,zeta3,bruteforce\n");
    for p in &cfg.w0.points {
        let xi = gradient(*p);
        let w = w0_closed_form(&m, &xi);
        let brute = if cfg.w0.brute_grid >= 2 {
            fmt17(w0_bruteforce(&m, &xi, cfg.w0.brute_grid).to_f64())
        } else {
            String::new()
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row(&xi),
            fmt17(xi.area_factor()),
            ext(w.value),
            fmt17(w.t),
            fmt17(w.zeta[0]),
            fmt17(w.zeta[1]),
            fmt17(w.zeta[2]),
            brute
        ));
        println!("W0 = {} at t* = {} (|ξ₁∧ξ₂| = {})", ext(w.value), fmt17(w.t), fmt17(xi.area_factor()));
    }
    let path = out.csv("w0.csv", &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn envelope_table(cfg: &RunConfig, depth: usize, radius: f64, pitch: f64) -> Result<EnvelopeTable, CliError> {
    let tables = tables(cfg, depth)?;
    let points = diagonal_slice(radius, pitch)?;
    let t = Instant::now();
    let table = EnvelopeTable::build(&tables, &points, depth)?;
    println!("envelope table: {} entries at depth {depth} in {:.1} s", points.len(), t.elapsed().as_secs_f64());
    Ok(table)
}

pub fn envelope(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let e = &cfg.envelope;
    let table = envelope_table(cfg, e.depth, e.slice_radius, e.slice_pitch)?;
    out.csv("envelope.csv", &table.to_csv())?;
    let path = out.json("envelope.json", &table)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn certify_growth(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let m = model(cfg)?;
    let cert = growth_certificate(&m)?;
    println!("growth chain: c̄₁ = {} → r₁ = {} → c = {}", fmt17(cert.c_bar1), fmt17(cert.r1), fmt17(cert.c));
    let g = &cfg.growth;
    let table = envelope_table(cfg, g.depth, g.radius, g.pitch)?;
    let audit = audit_table(&table, &cert);
    out.csv("growth_table.csv", &table.to_csv())?;
    let path = out.json("growth.json", &json!({ "certificate": cert, "audit": audit }))?;
    println!(
        "audit: {} entries, {} growth violations, max ratio {} ({})",
        audit.entries,
        audit.growth_violations,
        fmt17(audit.max_growth_ratio),
        if audit.passed() { "passed" } else { "FAILED" }
    );
    println!("wrote {}", path.display());
    if audit.passed() {
        Ok(())
    } else {
        Err(CliError::Infeasible("envelope table violates the growth certificate".into()))
    }
}

pub fn director(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let m = model(cfg)?;
    let d = &cfg.director;
    let xi = gradient(d.gradient);
    let v = PwAffineField::affine(TriMesh::unit_square(d.mesh_n)?, &xi, Vec3::ZERO);
    let grads: Vec<Mat32> = (0..v.mesh().cell_count()).map(|c| v.cell_gradient(c)).collect();
    let normal = feasible_normal(&grads)?;
    println!("feasible normal ζ̄ = {:?}, j_v = {}", normal.zeta_bar.0, normal.j_v);
    let w0 = w0_closed_form(&m, &xi).value;
    let mut csv = String::from("j,cell,constrained,w0,zeta1,zeta2,zeta3\n");
    for &j in &d.j {
        for (c, (g, s)) in grads.iter().zip(&normal.signs).enumerate() {
            let r = cell_min_constrained(&m, g, *s, j)?;
            csv.push_str(&format!(
                "{j},{c},{},{},{},{},{}\n",
                ext(r.value),
                ext(w0),
                fmt17(r.zeta[0]),
                fmt17(r.zeta[1]),
                fmt17(r.zeta[2])
            ));
        }
    }
    let nirf = nirf_value(&m, &v, d.nirf_j, d.nirf_n)?;
    let target = w0.scale(v.mesh().total_area());
    println!(
        "blended director at j = {}, n = {}: {} (|Σ|·W₀ = {})",
        d.nirf_j,
        d.nirf_n,
        ext(nirf.value),
        ext(target)
    );
    out.csv("director.csv", &csv)?;
    let path = out.json("director.json", &json!({ "normal": normal, "nirf": nirf, "target": target.to_f64() }))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn recovery(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let m = model(cfg)?;
    let r = &cfg.recovery;
    let xi = gradient(r.gradient);
    let coarse = PwAffineField::affine(TriMesh::unit_square(1)?, &xi, Vec3::ZERO);
    let asg = DirectorAssignment::new(&m, &coarse, r.j.max(1))?;
    let blend = blended_director(&coarse, &asg, r.n)?;
    let (fine, phi, _) = blend.to_p1(r.refinements);
    let v = PwAffineField::affine(fine, &xi, Vec3::ZERO);
    let target = director_energy(&m, &v, &phi).to_f64();
    let mut csv = String::from("eps,energy,target,rel_error,min_det\n");
    for &eps in &r.eps {
        let rec = recovery_sequence(&m, &v, &phi, eps, r.layers, r.det_floor)?;
        let e = rec.energy.to_f64();
        let rel = (e - target).abs() / target.abs();
        csv.push_str(&format!("{},{},{},{},{}\n", fmt17(eps), fmt17(e), fmt17(target), fmt17(rel), fmt17(rec.min_det)));
        println!("eps = {eps}: E = {}, relative error {}", fmt17(e), fmt17(rel));
    }
    let path = out.csv("recovery.csv", &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn nodal_csv(v: &PwAffineField) -> String {
    let mut csv = String::from("vertex,x1,x2,v1,v2,v3\n");
    for (i, (x, u)) in v.mesh().vertices().iter().zip(v.values()).enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            fmt17(x[0]),
            fmt17(x[1]),
            fmt17(u[0]),
            fmt17(u[1]),
            fmt17(u[2])
        ));
    }
    csv
}

pub fn membrane(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let exp = cfg.experiment()?;
    let tables = tables(cfg, exp.envelope_level)?;
    let sol = exp.membrane(&tables)?;
    println!(
        "membrane: E = {}, L = {}, total {} after {} iterations",
        fmt17(sol.energy),
        fmt17(sol.load),
        fmt17(sol.total),
        sol.iterations
    );
    out.csv("membrane.csv", &nodal_csv(&sol.v))?;
    let field: serde_json::Value = serde_json::from_str(&sol.v.to_json()?)?;
    let path = out.json(
        "membrane.json",
        &json!({ "energy": sol.energy, "load": sol.load, "total": sol.total, "iterations": sol.iterations, "field": field }),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn thinfilm(cfg: &RunConfig, out: &Output, eps: Option<f64>) -> Result<(), CliError> {
    let exp = cfg.experiment()?;
    let eps = eps.unwrap_or(exp.sweep.eps[0]);
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CliError::Config(format!("`--eps` must be positive, got {eps}")));
    }
    let m = model(cfg)?;
    let tables = tables(cfg, exp.envelope_level)?;
    let mem = exp.membrane(&tables)?;
    let grads: Vec<Mat32> = (0..mem.v.mesh().cell_count()).map(|c| mem.v.cell_gradient(c)).collect();
    let normal = feasible_normal(&grads)?;
    let asg = DirectorAssignment::new(&m, &mem.v, 64 * normal.j_v)?;
    let phi = nodal_director(&asg, mem.v.mesh());
    let start = PrismField::recovery(&mem.v, &phi, exp.sweep.layers, eps)?;
    let sol = if exp.sweep.mode == SweepMode::Recovery {
        let no_steps = memrelax_core::dimension_reduction::SolverParams {
            max_iter: 0,
            starts: 1,
            ..exp.sweep.film
        };
        minimize_thin_film(&m, &exp.load, &start, &no_steps, cfg.seed)?
    } else {
        minimize_thin_film(&m, &exp.load, &start, &exp.sweep.film, cfg.seed)?
    };
    println!(
        "thin film at eps = {eps}: E = {}, L = {}, total {} ({} iterations; competitor {})",
        fmt17(sol.energy),
        fmt17(sol.load),
        fmt17(sol.total),
        sol.iterations,
        fmt17(sol.start_total)
    );
    let csv = format!(
        "eps,energy,load,total,iterations,competitor,membrane_total\n{},{},{},{},{},{},{}\n",
        fmt17(eps),
        fmt17(sol.energy),
        fmt17(sol.load),
        fmt17(sol.total),
        sol.iterations,
        fmt17(sol.start_total),
        fmt17(mem.total)
    );
    out.csv("thinfilm.csv", &csv)?;
    let field: serde_json::Value = serde_json::from_str(&sol.u.to_json()?)?;
    let path = out.json("thinfilm.json", &json!({ "eps": eps, "total": sol.total, "history": sol.history, "field": field }))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn gamma_sweep(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let exp = cfg.experiment()?;
    let tables = tables(cfg, exp.envelope_level)?;
    let t = Instant::now();
    let res = exp.run_with(&tables)?;
    let r = &res.report;
    for row in &r.rows {
        println!(
            "eps = {}: gap {}, L^p distance {}, {} iterations",
            fmt17(row.eps),
            fmt17(row.gap),
            fmt17(row.lp_distance),
            row.iterations
        );
    }
    println!(
        "sweep in {:.1} s: gap trend {}, distance trend {}, competitor dominated {}",
        t.elapsed().as_secs_f64(),
        r.gap_trend_ok,
        r.lp_trend_ok,
        r.competitor_dominated
    );
    out.csv("sweep.csv", &r.to_csv())?;
    out.csv("membrane.csv", &nodal_csv(&res.membrane.v))?;
    let path = out.json("sweep.json", r)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Fast invariant checks; fails with exit code 4 when any check fails.
pub fn selftest(cfg: &RunConfig) -> Result<(), CliError> {
    let m = model(cfg)?;
    let id = Mat32::identity_embedding();
    let mut checks: Vec<(&str, bool)> = Vec::new();

    let w = w0_closed_form(&m, &id).value.to_f64();
    let brute = w0_bruteforce(&m, &id, 101).to_f64();
    checks.push(("w0 closed form matches brute force", (w - brute).abs() <= 2e-2 * (1.0 + w.abs())));
    if cfg.model == memrelax_core::ModelSpec::default() {
        checks.push(("w0 at the identity embedding", (w - (2.0 + 3.0 * 2f64.powf(-2.0 / 3.0))).abs() < 1e-9));
        let cert = growth_certificate(&m)?;
        checks.push(("growth chain 2 -> 64 -> 512", cert.c_bar1 == 2.0 && cert.r1 == 64.0 && cert.c == 512.0));
    }
    let flat = Mat32::rank_one(&Vec3::E1, [1.0, 1.0]);
    checks.push(("w0 infinite at rank deficiency", w0_closed_form(&m, &flat).value == ExtValue::Infinite));

    let conditions = m.check_conditions(200, &[0.5, 1.0], cfg.seed)?;
    checks.push(("barrier conditions", conditions.all_hold()));

    let density = |xi: &Mat32| w0_closed_form(&m, xi).value;
    let fc = four_corner_bound(&Mat32::diagonal(1.0, 0.5), &density)?;
    checks.push(("four-corner bound is finite", fc.is_finite()));

    let mut prev = ExtValue::Infinite;
    let mut monotone = true;
    for j in [1, 2, 4, 8, 16, 64] {
        let v = cell_min_constrained(&m, &id, memrelax_core::director::Sign::Plus, j)?.value;
        monotone &= v <= prev;
        prev = v;
    }
    checks.push(("constrained minima nonincreasing in j", monotone));

    let v = PwAffineField::affine(TriMesh::unit_square(2)?, &id, Vec3::ZERO);
    let phi = vec![Vec3::E3; v.mesh().vertex_count()];
    let rec = recovery_sequence(&m, &v, &phi, 0.1, 5, 0.5)?;
    if cfg.model == memrelax_core::ModelSpec::default() {
        checks.push(("recovery with φ = e₃ has energy 4", (rec.energy.to_f64() - 4.0).abs() < 1e-12));
    }
    checks.push(("fmt17 round trip", fmt17(0.1).parse::<f64>() == Ok(0.1)));

    let mut failed = 0;
    for (name, ok) in &checks {
        println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("selftest: {} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Internal(format!("{failed} selftest checks failed")))
    }
}
