use std::path::Path;

use serde_json::Value;

use crate::config::CliError;

/// Merges JSON-lines reports into a human-readable summary and a plot-ready
/// CSV. Duplicate check names across files are suffixed with the source
/// filename; rows are ordered by (name, source), so reruns are idempotent.
pub fn cmd_report(paths: &[std::path::PathBuf], out: &Path) -> Result<bool, CliError> {
    if paths.is_empty() {
        return Err(CliError::Config("no report files given".to_string()));
    }
    let mut rows: Vec<(String, String, Value)> = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        // the path as given disambiguates files that share a basename
        let source = path.display().to_string();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(line).map_err(|e| {
                CliError::Config(format!("{}:{} is not valid JSON: {e}", path.display(), k + 1))
            })?;
            let name = v
                .get("name")
                .and_then(Value::as_str)
                .unwrap_or("unnamed")
                .to_string();
            rows.push((name, source.clone(), v));
        }
    }
    rows.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));

    // suffix duplicated names with their source file
    let mut display_names = Vec::with_capacity(rows.len());
    for (i, (name, source, _)) in rows.iter().enumerate() {
        let dup = rows.iter().enumerate().any(|(j, r)| j != i && &r.0 == name);
        display_names.push(if dup { format!("{name} ({source})") } else { name.clone() });
    }

    let mut summary = String::new();
    summary.push_str(&format!(
        "{:<44} {:>12} {:>12} {:>14} {:>10} {:>8}\n",
        "check", "lhs", "rhs", "resid/slack", "tol", "status"
    ));
    let mut csv = String::from("name,kind,lhs,rhs,residual_or_slack,tolerance,pass\n");
    let mut all_pass = true;
    for ((_, _, v), display) in rows.iter().zip(&display_names) {
        if v.get("status").and_then(Value::as_str) == Some("skipped") {
            let reason = v.get("reason").and_then(Value::as_str).unwrap_or("");
            summary.push_str(&format!("{display:<44} {:>12} {:>12} {:>14} {:>10} {:>8}\n", "-", "-", "-", "-", "skipped"));
            csv.push_str(&format!("{display},skipped,,,,,{reason}\n"));
            continue;
        }
        let num = |k: &str| v.get(k).and_then(Value::as_f64).unwrap_or(f64::NAN);
        let pass = v.get("pass").and_then(Value::as_bool).unwrap_or(false);
        all_pass &= pass;
        let kind = v.get("kind").and_then(Value::as_str).unwrap_or("?");
        summary.push_str(&format!(
            "{:<44} {:>12.4e} {:>12.4e} {:>14.4e} {:>10.1e} {:>8}\n",
            display,
            num("lhs"),
            num("rhs"),
            num("residual_or_slack"),
            num("tolerance"),
            if pass { "pass" } else { "FAIL" }
        ));
        csv.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e},{}\n",
            display,
            kind,
            num("lhs"),
            num("rhs"),
            num("residual_or_slack"),
            num("tolerance"),
            pass
        ));
    }

    print!("{summary}");
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    std::fs::write(out.join("summary.txt"), &summary)
        .map_err(|e| CliError::Config(format!("write failed: {e}")))?;
    std::fs::write(out.join("merged.csv"), &csv)
        .map_err(|e| CliError::Config(format!("write failed: {e}")))?;
    Ok(all_pass)
}
