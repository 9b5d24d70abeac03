//! Monte Carlo summary tables.

use std::io::Write;

use ctdc_core::inference::{McSummary, SampleStats};

const HEADER: [&str; 8] = [
    "Parameter",
    "True Value",
    "Mean",
    "Median",
    "S.D.",
    "RMSE",
    "Mean Bias",
    "Median Bias",
];

fn rows(s: &McSummary, timing: bool, fmt: impl Fn(f64) -> String) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = s
        .parameter_names
        .iter()
        .zip(&s.theta_true)
        .zip(&s.parameters)
        .map(|((name, &truth), p)| {
            let mut row = vec![name.clone(), fmt(truth)];
            row.extend([p.mean, p.median, p.sd, p.rmse, p.mean_bias, p.median_bias].map(&fmt));
            row
        })
        .collect();
    let sample_row = |label: &str, st: &SampleStats| {
        let mut row = vec![label.to_string(), String::new()];
        row.extend([st.mean, st.median, st.sd].map(&fmt));
        row.extend([String::new(), String::new(), String::new()]);
        row
    };
    if timing {
        out.push(sample_row("Time (s)", &s.wall_time));
    }
    out.push(sample_row("Func. Eval.", &s.func_evals));
    out
}

/// Aligned text table with three decimals. The time row appears only when
/// `timing` is set.
pub fn format_table(s: &McSummary, timing: bool) -> String {
    let body = rows(s, timing, |v| format!("{v:.3}"));
    let mut widths: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = format!("{:<w$}", cells[0], w = widths[0]);
        for (cell, w) in cells[1..].iter().zip(&widths[1..]) {
            s.push_str(&format!("  {cell:>w$}", w = *w));
        }
        s.trim_end().to_string() + "\n"
    };
    let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let rule = "-".repeat(total) + "\n";
    let header: Vec<String> = HEADER.iter().map(|h| h.to_string()).collect();
    let n_params = s.parameters.len();
    let mut out = String::new();
    out.push_str(&rule);
    out.push_str(&line(&header));
    out.push_str(&rule);
    for row in &body[..n_params] {
        out.push_str(&line(row));
    }
    out.push_str(&rule);
    for row in &body[n_params..] {
        out.push_str(&line(row));
    }
    out.push_str(&rule);
    out.push_str(&format!(
        "replications: {}  not converged: {}  failed: {}\n",
        s.n_reps,
        s.n_not_converged,
        s.failures.len()
    ));
    out
}

/// Same layout as [`format_table`] at full precision.
pub fn write_csv<W: Write>(writer: W, s: &McSummary, timing: bool) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["parameter", "true_value", "mean", "median", "sd", "rmse", "mean_bias", "median_bias"])?;
    for row in rows(s, timing, |v| v.to_string()) {
        w.write_record(&row)?;
    }
    w.flush()
}

/// One row per successful replication.
pub fn write_replications<W: Write>(writer: W, s: &McSummary) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["replication".to_string()];
    header.extend(s.parameter_names.iter().cloned());
    header.extend(["loglik", "func_evals", "wall_time", "converged"].map(String::from));
    w.write_record(&header)?;
    for r in &s.replications {
        let mut rec = vec![r.replication.to_string()];
        rec.extend(r.theta_hat.iter().map(|v| v.to_string()));
        rec.extend([
            r.loglik.to_string(),
            r.n_func_evals.to_string(),
            r.wall_time.to_string(),
            r.converged.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctdc_core::inference::ParameterStats;

    fn summary() -> McSummary {
        let p = ParameterStats {
            mean: -0.504,
            median: -0.501,
            sd: 0.055,
            rmse: 0.055,
            mean_bias: -0.004,
            median_bias: -0.001,
        };
        let st = SampleStats {
            mean: 18.4,
            median: 19.0,
            sd: 1.375,
        };
        McSummary {
            parameter_names: vec!["theta_ec".into(), "gamma".into()],
            theta_true: vec![-0.5, 0.3],
            parameters: vec![p, p],
            wall_time: st,
            func_evals: st,
            n_reps: 2,
            n_not_converged: 0,
            failures: Vec::new(),
            replications: Vec::new(),
        }
    }

    #[test]
    fn table_layout() {
        let t = format_table(&summary(), true);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[1].starts_with("Parameter") && lines[1].ends_with("Median Bias"));
        assert!(lines[3].starts_with("theta_ec") && lines[3].contains("-0.500") && lines[3].ends_with("-0.001"));
        assert!(lines[6].starts_with("Time (s)"));
        assert!(lines[7].starts_with("Func. Eval.") && lines[7].ends_with("1.375"));
        assert!(!format_table(&summary(), false).contains("Time"));
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &summary(), false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[3], "Func. Eval.,,18.4,19,1.375,,,");
    }
}
