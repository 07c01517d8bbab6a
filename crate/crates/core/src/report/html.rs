//! Single-file static HTML rendering of a report.

use std::fmt::Write;

use serde_json::Value;

use super::{DigestibleKind, Report};

const STYLE: &str = "body{font-family:system-ui,sans-serif;margin:2rem;color:#222}\
table{border-collapse:collapse;margin:.5rem 0}td,th{border:1px solid #ccc;padding:.2rem .5rem;text-align:left}\
th{background:#f3f3f3}section{margin-bottom:2rem}pre{background:#f7f7f7;padding:.5rem;overflow-x:auto}\
.fail{color:#b00020}.ok{color:#1b5e20}";

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => esc(s),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.4}"),
            _ => n.to_string(),
        },
        Value::Null => "&ndash;".to_owned(),
        other => esc(&other.to_string()),
    }
}

fn table(out: &mut String, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
    out.push_str("<table><tr>");
    for h in header {
        let _ = write!(out, "<th>{}</th>", esc(h));
    }
    out.push_str("</tr>");
    for row in rows {
        out.push_str("<tr>");
        for c in row {
            let _ = write!(out, "<td>{c}</td>");
        }
        out.push_str("</tr>");
    }
    out.push_str("</table>");
}

fn key_values(out: &mut String, obj: &Value) {
    if let Value::Object(map) = obj {
        let rows = map
            .iter()
            .filter(|(_, v)| !v.is_object() && !v.is_array())
            .map(|(k, v)| vec![esc(k), cell(v)]);
        table(out, &["field", "value"], rows);
    }
}

fn raw(out: &mut String, v: &Value) {
    let pretty = serde_json::to_string_pretty(v).unwrap_or_default();
    let _ = write!(out, "<details><summary>payload</summary><pre>{}</pre></details>", esc(&pretty));
}

fn confusion(out: &mut String, p: &Value) {
    let labels: Vec<&str> = p["labels"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
    let counts: Vec<Vec<u64>> = p["counts"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|r| r.as_array().into_iter().flatten().filter_map(Value::as_u64).collect())
        .collect();
    let max = counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let (size, pad) = (48.0, 90.0);
    let dim = pad + size * labels.len() as f64;
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{dim}" height="{dim}" role="img" aria-label="confusion matrix">"#
    );
    for (i, label) in labels.iter().enumerate() {
        let offset = pad + size * i as f64 + size / 2.0;
        let _ = write!(
            out,
            r#"<text x="{}" y="{offset}" font-size="11" text-anchor="end">{}</text><text x="{offset}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            pad - 4.0,
            esc(label),
            pad - 6.0,
            esc(label)
        );
    }
    for (g, row) in counts.iter().enumerate() {
        for (q, count) in row.iter().enumerate() {
            let (x, y) = (pad + size * q as f64, pad + size * g as f64);
            let alpha = *count as f64 / max;
            let _ = write!(
                out,
                r##"<rect class="cm-cell" x="{x}" y="{y}" width="{size}" height="{size}" fill="rgb(33,102,172)" fill-opacity="{alpha:.3}" stroke="#999"/><text x="{}" y="{}" font-size="12" text-anchor="middle">{count}</text>"##,
                x + size / 2.0,
                y + size / 2.0 + 4.0
            );
        }
    }
    out.push_str("</svg><p>rows: gold, columns: predicted</p>");
}

fn attribution(out: &mut String, p: &Value) {
    let tokens: Vec<&str> = p["tokens"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
    let weights: Vec<f64> = p["weights"].as_array().into_iter().flatten().filter_map(Value::as_f64).collect();
    let max = weights.iter().map(|w| w.abs()).fold(0.0, f64::max);
    let (row, label_w, half) = (18.0, 120.0, 150.0);
    let height = row * tokens.len() as f64 + 4.0;
    let _ = write!(
        out,
        r#"<p>method {} &middot; base value {} &middot; model output {}</p><svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" role="img" aria-label="token attributions">"#,
        cell(&p["method"]),
        cell(&p["base_value"]),
        cell(&p["model_output"]),
        label_w + 2.0 * half + 80.0
    );
    let axis = label_w + half;
    for (i, (token, w)) in tokens.iter().zip(&weights).enumerate() {
        let y = row * i as f64 + 2.0;
        let len = if max > 0.0 { w.abs() / max * half } else { 0.0 };
        let (x, fill) = if *w >= 0.0 { (axis, "#1b7837") } else { (axis - len, "#b2182b") };
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{}</text><rect class="attr-bar" x="{x:.2}" y="{y}" width="{len:.2}" height="{}" fill="{fill}"/><text x="{}" y="{}" font-size="10">{w:.4}</text>"#,
            label_w - 4.0,
            y + 12.0,
            esc(token),
            row - 4.0,
            axis + half + 4.0,
            y + 12.0
        );
    }
    let _ = write!(out, r##"<line x1="{axis}" y1="0" x2="{axis}" y2="{height}" stroke="#555"/></svg>"##);
}

fn metrics(out: &mut String, p: &Value) {
    key_values(out, p);
    if let Some(per_label) = p["per_label"].as_object() {
        let rows = per_label.iter().map(|(label, s)| {
            vec![
                esc(label),
                cell(&s["precision"]),
                cell(&s["recall"]),
                cell(&s["f1"]),
                cell(&s["support"]),
            ]
        });
        table(out, &["label", "precision", "recall", "f1", "support"], rows);
    }
}

fn test_result(out: &mut String, p: &Value) {
    key_values(out, p);
    let rows = p["example_failures"].as_array().into_iter().flatten().map(|f| {
        vec![cell(&f["id"]), cell(&f["original"]), cell(&f["variant"])]
    });
    table(out, &["failing case", "original", "variant"], rows);
}

fn fairness(out: &mut String, p: &Value) {
    key_values(out, p);
    let groups = p["groups"].as_array().cloned().unwrap_or_default();
    let columns: Vec<String> = groups
        .first()
        .and_then(Value::as_object)
        .map(|o| o.keys().cloned().collect())
        .unwrap_or_default();
    let header: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = groups.iter().map(|g| columns.iter().map(|c| cell(&g[c])).collect());
    table(out, &header, rows);
}

fn fuzz(out: &mut String, p: &Value) {
    key_values(out, p);
    let rows = p["cases"].as_array().into_iter().flatten().map(|c| {
        let verdict = c["verdict"].as_str().unwrap_or("");
        let class = if verdict == "ok" { "ok" } else { "fail" };
        vec![
            cell(&c["name"]),
            cell(&c["length_chars"]),
            format!(r#"<span class="{class}">{}</span>"#, esc(verdict)),
            cell(&c["detail"]),
        ]
    });
    table(out, &["input", "chars", "verdict", "detail"], rows);
}

/// Render a report as one self-contained HTML page (inline CSS and SVG only).
pub fn render_html(report: &Report) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "<!DOCTYPE html><html lang=\"en\"><head><meta charset=\"utf-8\"><title>Explabox report</title><style>{STYLE}</style></head><body><h1>Explabox report</h1>"
    );
    let meta = serde_json::to_value(&report.meta).unwrap_or(Value::Null);
    out.push_str("<section><h2>Metadata</h2>");
    key_values(&mut out, &meta);
    let _ = write!(out, "<p>content hash <code>{}</code></p></section>", esc(&report.content_hash));
    for (i, d) in report.digestibles.iter().enumerate() {
        let _ = write!(
            out,
            "<section><h2>{}. {} <small>({})</small></h2>",
            i + 1,
            d.kind.as_str(),
            esc(&d.provenance.operation)
        );
        match d.kind {
            DigestibleKind::Confusion => confusion(&mut out, &d.payload),
            DigestibleKind::Attribution => attribution(&mut out, &d.payload),
            DigestibleKind::Metrics => metrics(&mut out, &d.payload),
            DigestibleKind::TestResult => test_result(&mut out, &d.payload),
            DigestibleKind::FairnessReport => fairness(&mut out, &d.payload),
            DigestibleKind::FuzzResult => fuzz(&mut out, &d.payload),
            DigestibleKind::SplitStats | DigestibleKind::GlobalSummary => key_values(&mut out, &d.payload),
        }
        raw(&mut out, &d.payload);
        out.push_str("</section>");
    }
    out.push_str("</body></html>\n");
    out
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::super::{Digestible, Provenance, ReportMeta};
    use super::*;

    fn report(digestibles: Vec<Digestible>) -> Report {
        Report::new(ReportMeta::new(0, None, "0".repeat(64), "1".repeat(64)), digestibles).unwrap()
    }

    #[test]
    fn empty_report_has_metadata_only() {
        let html = render_html(&report(vec![]));
        assert!(html.starts_with("<!DOCTYPE html>"));
        assert!(html.contains("Metadata"));
        assert!(!html.contains("<section><h2>1."));
        assert!(!html.contains("src=") && !html.contains("href="));
    }

    #[test]
    fn confusion_grid_has_square_cells() {
        let d = Digestible::new(
            DigestibleKind::Confusion,
            &json!({"labels": ["a", "b", "<c>"], "counts": [[1, 0, 0], [0, 2, 1], [0, 0, 3]], "unlabelled": 0}),
            Provenance::new("examine", 0, json!({})),
        )
        .unwrap();
        let r = report(vec![d]);
        let html = render_html(&r);
        assert_eq!(html.matches("class=\"cm-cell\"").count(), 9);
        assert!(html.contains("&lt;c&gt;"));
        assert_eq!(html, render_html(&r));
    }

    #[test]
    fn attribution_bars() {
        let d = Digestible::new(
            DigestibleKind::Attribution,
            &json!({"method": "lime", "tokens": ["good", "film"], "weights": [0.5, -0.2], "base_value": 0.1, "model_output": 0.4}),
            Provenance::new("explain", 0, json!({})),
        )
        .unwrap();
        let html = render_html(&report(vec![d]));
        assert_eq!(html.matches("class=\"attr-bar\"").count(), 2);
        assert!(html.contains("#b2182b"));
    }
}
