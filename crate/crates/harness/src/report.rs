//! Consolidated report: certificates, bound, one simulation and the value
//! oracles.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use atmpc_core::certify::{spectral_radius_report, verify_p, verify_robust_stability, Certificate};
use atmpc_core::perf_bound::BoundReport;

use crate::bounds;
use crate::config::Problem;
use crate::oracle::{v_infinity_lower, v_infinity_upper};
use crate::output::{bound_text, certificate_text, write_bound, write_run, Format};
use crate::sim::{simulate, SimResult};
use crate::HarnessError;

pub struct Certificates {
    pub lyapunov: Certificate<f64>,
    pub robust: Certificate<f64>,
    pub spectral_radii: Vec<(Vec<f64>, f64)>,
}

pub fn certificates(p: &Problem) -> Result<Certificates, HarnessError> {
    let k = p.k();
    Ok(Certificates {
        lyapunov: verify_p(&p.sys, k, &p.tube.p, &p.cost.q, &p.cost.r, &p.theta0)?,
        robust: verify_robust_stability(&p.sys, k, &p.tube.p, &p.theta0)?,
        spectral_radii: spectral_radius_report(&p.sys, k, &p.theta0)?
            .into_iter()
            .map(|(t, r)| (t.iter().copied().collect(), r))
            .collect(),
    })
}

pub fn certificates_text(c: &Certificates) -> String {
    let mut out = certificate_text("terminal weight decrease", &c.lyapunov);
    out.push_str(&certificate_text("common Lyapunov function", &c.robust));
    out.push_str("spectral radius of A_cl at the vertices:\n");
    for (t, r) in &c.spectral_radii {
        let th: Vec<String> = t.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(out, "  theta = [{}]  rho = {r:.6}", th.join(", "));
    }
    out
}

pub struct Report {
    pub certificates: Certificates,
    pub bound: BoundReport<f64>,
    pub sim: SimResult,
    pub v_upper: f64,
    pub v_lower: f64,
}

impl Report {
    pub fn bound_value(&self) -> f64 {
        self.bound.total(self.v_upper)
    }

    pub fn text(&self) -> String {
        let mut out = String::from("== certificates ==\n");
        out.push_str(&certificates_text(&self.certificates));
        out.push_str("\n== performance bound ==\n");
        out.push_str(&bound_text(&self.bound));
        out.push_str("\n== closed loop ==\n");
        let s = &self.sim;
        let _ = writeln!(out, "steps = {}", s.log.inputs.len());
        let _ = writeln!(out, "converged = {}", s.converged);
        let _ = writeln!(out, "J (sum + tail) = {:.6e}", s.cost);
        let _ = writeln!(out, "V_N(x0) = {:.6e}", s.first_decision.value);
        let _ = writeln!(out, "V_inf lower (unconstrained) = {:.6e}", self.v_lower);
        let _ = writeln!(out, "V_inf upper (known parameter) = {:.6e}", self.v_upper);
        let _ = writeln!(out, "bound at V_inf upper = {:.6e}", self.bound_value());
        let _ = writeln!(out, "J within bound = {}", s.cost <= self.bound_value());
        let v = s.invariants.violations();
        if v.is_empty() {
            out.push_str("invariants: all checks passed\n");
        } else {
            for line in v {
                let _ = writeln!(out, "invariant violated: {line}");
            }
        }
        out
    }
}

pub fn build(p: &Problem) -> Result<Report, HarnessError> {
    let certificates = certificates(p)?;
    let k = bounds::constants(p)?;
    let sim = simulate(p)?;
    let bound = bounds::report(p, &k, sim.theta_err0)?;
    Ok(Report {
        certificates,
        bound,
        v_upper: v_infinity_upper(p, &p.x0)?,
        v_lower: v_infinity_lower(p, &p.x0)?,
        sim,
    })
}

/// Writes `report.txt`, `certificates.txt`, the bound report and the run.
pub fn write(dir: &Path, r: &Report, format: Format) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.txt"), r.text())?;
    fs::write(
        dir.join("certificates.txt"),
        certificates_text(&r.certificates),
    )?;
    write_bound(dir, &r.bound, format)?;
    write_run(dir, &r.sim, format)
}
