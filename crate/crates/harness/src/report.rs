//! CSV and summary emission. Column order is fixed; numbers use the shortest
//! representation that round-trips, so identical runs give identical bytes.

use std::fmt::Write as _;

use itreg::nit_solver::StudyRow;
use itreg::{GridFn, RunReport};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Per-iteration table with a `# key=value` summary header.
pub fn iterations_csv(report: &RunReport<f64>, summary: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in summary {
        let _ = writeln!(s, "# {k}={v}");
    }
    s.push_str("n,alpha,residual,theta_value,bregman_to_ref,inner_iters\n");
    for st in &report.states {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            st.n,
            st.alpha,
            st.residual,
            st.theta_value,
            opt(st.bregman_to_ref),
            st.inner.as_ref().map_or(0, |i| i.iterations)
        );
    }
    s
}

/// Node coordinates, reconstruction and exact solution.
pub fn reconstruction_csv(x: &GridFn<f64>, exact: &GridFn<f64>) -> String {
    let space = x.space();
    let mut s = String::new();
    s.push_str(if space.ndim() == 1 {
        "x,value,exact\n"
    } else {
        "x,y,value,exact\n"
    });
    for k in 0..space.len() {
        for c in space.coords(k) {
            let _ = write!(s, "{c},");
        }
        let _ = writeln!(s, "{},{}", x.values()[k], exact.values()[k]);
    }
    s
}

pub fn study_csv(rows: &[StudyRow<f64>]) -> String {
    let mut s =
        String::from("delta,n_delta,residual,l2_error,theta_value,bregman,terminated_by,failure\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.delta,
            r.n_delta.map_or_else(String::new, |n| n.to_string()),
            opt(r.residual),
            opt(r.error),
            opt(r.theta_value),
            opt(r.bregman),
            r.terminated_by.map_or("", |t| t.as_str()),
            r.failure.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    s
}
