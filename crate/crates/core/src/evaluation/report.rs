//! Run artifacts: the per-origin record table, the metrics summary, and a
//! plot of the forecast band against the truth.
//!
//! Every writer stamps the config hash into its output and formats numbers
//! through deterministic code paths, so re-running a config produces
//! byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::calibration::Family;
use crate::canon::to_canonical_json;
use crate::evaluation::{EvalError, ForecastRecord, MetricsSummary, RecordStatus};

const CSV_HEADER: &str = "origin_date,horizon_step,y_true,raw_mean,mu,q05,q50,q95,family,n_dispersion,p_success,impact,confidence,uncertainty,volatility,status";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed record table at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn family_token(f: Family) -> &'static str {
    match f {
        Family::NegBinomial => "neg_binomial",
        Family::Poisson => "poisson",
        Family::Degenerate => "degenerate",
    }
}

fn parse_family(s: &str) -> Option<Family> {
    match s {
        "neg_binomial" => Some(Family::NegBinomial),
        "poisson" => Some(Family::Poisson),
        "degenerate" => Some(Family::Degenerate),
        _ => None,
    }
}

fn status_token(s: RecordStatus) -> &'static str {
    match s {
        RecordStatus::Ok => "ok",
        RecordStatus::InvalidOrigin => "invalid_origin",
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the record table as CSV behind a `# config_hash=` comment line.
pub fn write_records_csv(
    path: &Path,
    records: &[ForecastRecord],
    config_hash: &str,
) -> Result<(), ReportError> {
    let mut out = String::new();
    out.push_str(&format!("# config_hash={config_hash}\n"));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.origin_date,
            r.horizon_step,
            r.y_true,
            r.raw_mean,
            r.mu,
            r.q05,
            r.q50,
            r.q95,
            family_token(r.family),
            opt_f64(r.n_dispersion),
            opt_f64(r.p_success),
            r.impact,
            r.confidence,
            r.uncertainty,
            r.volatility,
            status_token(r.status),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a record table written by [`write_records_csv`]. Returns the
/// embedded config hash alongside the records.
pub fn read_records_csv(path: &Path) -> Result<(String, Vec<ForecastRecord>), ReportError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, first) = lines.next().ok_or(ReportError::Malformed {
        line: 1,
        message: "empty file".into(),
    })?;
    let config_hash = first
        .strip_prefix("# config_hash=")
        .ok_or(ReportError::Malformed {
            line: 1,
            message: "missing config_hash comment".into(),
        })?
        .to_string();

    let (_, header) = lines.next().ok_or(ReportError::Malformed {
        line: 2,
        message: "missing header".into(),
    })?;
    if header != CSV_HEADER {
        return Err(ReportError::Malformed {
            line: 2,
            message: format!("unexpected header {header:?}"),
        });
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let bad = |message: String| ReportError::Malformed {
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 16 {
            return Err(bad(format!("expected 16 fields, got {}", fields.len())));
        }
        let date: NaiveDate = fields[0]
            .parse()
            .map_err(|e| bad(format!("origin_date: {e}")))?;
        let parse_f = |i: usize, name: &str| -> Result<f64, ReportError> {
            fields[i].parse().map_err(|e| bad(format!("{name}: {e}")))
        };
        let parse_u = |i: usize, name: &str| -> Result<u32, ReportError> {
            fields[i].parse().map_err(|e| bad(format!("{name}: {e}")))
        };
        let parse_opt = |i: usize, name: &str| -> Result<Option<f64>, ReportError> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                fields[i]
                    .parse()
                    .map(Some)
                    .map_err(|e| bad(format!("{name}: {e}")))
            }
        };
        records.push(ForecastRecord {
            origin_date: date,
            horizon_step: parse_u(1, "horizon_step")?,
            y_true: parse_u(2, "y_true")?,
            raw_mean: parse_f(3, "raw_mean")?,
            mu: parse_f(4, "mu")?,
            q05: parse_u(5, "q05")?,
            q50: parse_u(6, "q50")?,
            q95: parse_u(7, "q95")?,
            family: parse_family(fields[8]).ok_or_else(|| bad(format!(
                "family: unknown token {:?}",
                fields[8]
            )))?,
            n_dispersion: parse_opt(9, "n_dispersion")?,
            p_success: parse_opt(10, "p_success")?,
            impact: parse_f(11, "impact")?,
            confidence: parse_f(12, "confidence")?,
            uncertainty: parse_f(13, "uncertainty")?,
            volatility: parse_f(14, "volatility")?,
            status: match fields[15] {
                "ok" => RecordStatus::Ok,
                "invalid_origin" => RecordStatus::InvalidOrigin,
                other => return Err(bad(format!("status: unknown token {other:?}"))),
            },
        });
    }
    Ok((config_hash, records))
}

/// Writes the metrics summary as canonical JSON with the config hash inside.
pub fn write_summary_json(
    path: &Path,
    summary: &MetricsSummary,
    config_hash: &str,
) -> Result<(), ReportError> {
    let value = serde_json::json!({
        "config_hash": config_hash,
        "mae": summary.mae,
        "rmse": summary.rmse,
        "crps": summary.crps,
        "coverage90": summary.coverage90,
        "n_origins": summary.n_origins,
        "n_excluded": summary.n_excluded,
    });
    let mut f = fs::File::create(path)?;
    f.write_all(to_canonical_json(&value).as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

const SVG_W: f64 = 900.0;
const SVG_H: f64 = 360.0;
const MARGIN_L: f64 = 50.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 40.0;

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders first-step forecasts as an SVG: the 90% band as a shaded
/// polygon, the median and the truth as lines. Quantiles are counts, so the
/// band cannot dip below the zero axis.
pub fn write_forecast_svg(
    path: &Path,
    records: &[ForecastRecord],
    config_hash: &str,
) -> Result<(), ReportError> {
    let rows: Vec<&ForecastRecord> = records
        .iter()
        .filter(|r| r.status == RecordStatus::Ok && r.horizon_step == 1)
        .collect();

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SVG_W} {SVG_H}\">\n"
    ));
    svg.push_str(&format!("<!-- config_hash={config_hash} -->\n"));
    svg.push_str(&format!(
        "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n"
    ));

    if rows.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\">no scored records</text>\n",
            SVG_W / 2.0 - 60.0,
            SVG_H / 2.0
        ));
        svg.push_str("</svg>\n");
        fs::write(path, svg)?;
        return Ok(());
    }

    let max_count = rows
        .iter()
        .map(|r| r.y_true.max(r.q95))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let n = rows.len();
    let x_at = |i: usize| {
        if n == 1 {
            MARGIN_L + plot_w / 2.0
        } else {
            MARGIN_L + plot_w * i as f64 / (n - 1) as f64
        }
    };
    let y_at = |v: f64| MARGIN_T + plot_h * (1.0 - v / max_count);

    // 90% band: lower edge forward, upper edge back.
    let mut band = String::new();
    for (i, r) in rows.iter().enumerate() {
        band.push_str(&format!("{},{} ", fmt2(x_at(i)), fmt2(y_at(r.q05 as f64))));
    }
    for (i, r) in rows.iter().enumerate().rev() {
        band.push_str(&format!("{},{} ", fmt2(x_at(i)), fmt2(y_at(r.q95 as f64))));
    }
    svg.push_str(&format!(
        "<polygon points=\"{}\" fill=\"#a6c8ff\" fill-opacity=\"0.5\" stroke=\"none\"/>\n",
        band.trim_end()
    ));

    let polyline = |vals: Vec<f64>, stroke: &str, dash: &str| {
        let pts: Vec<String> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{},{}", fmt2(x_at(i)), fmt2(y_at(*v))))
            .collect();
        format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"{dash}/>\n",
            pts.join(" ")
        )
    };
    svg.push_str(&polyline(
        rows.iter().map(|r| r.q50 as f64).collect(),
        "#1f4e9c",
        " stroke-dasharray=\"4 3\"",
    ));
    svg.push_str(&polyline(
        rows.iter().map(|r| r.y_true as f64).collect(),
        "#222222",
        "",
    ));

    // Axes and edge labels.
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"#555\"/>\n<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#555\"/>\n",
        l = MARGIN_L,
        t = MARGIN_T,
        b = SVG_H - MARGIN_B,
        r = SVG_W - MARGIN_R,
    ));
    let label = |x: f64, y: f64, anchor: &str, text: String| {
        format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{anchor}\">{text}</text>\n",
            fmt2(x),
            fmt2(y)
        )
    };
    svg.push_str(&label(
        MARGIN_L - 6.0,
        SVG_H - MARGIN_B + 4.0,
        "end",
        "0".into(),
    ));
    svg.push_str(&label(
        MARGIN_L - 6.0,
        MARGIN_T + 10.0,
        "end",
        format!("{max_count}"),
    ));
    svg.push_str(&label(
        MARGIN_L,
        SVG_H - MARGIN_B + 16.0,
        "start",
        rows[0].origin_date.to_string(),
    ));
    svg.push_str(&label(
        SVG_W - MARGIN_R,
        SVG_H - MARGIN_B + 16.0,
        "end",
        rows[n - 1].origin_date.to_string(),
    ));
    svg.push_str(&label(
        SVG_W - MARGIN_R,
        MARGIN_T + 10.0,
        "end",
        "truth (solid), median (dashed), 90% band (shaded)".into(),
    ));
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

/// Helper for callers that have run results in memory and want all three
/// artifacts in one directory.
pub fn write_run_artifacts(
    dir: &Path,
    records: &[ForecastRecord],
    summary: &MetricsSummary,
    config_hash: &str,
) -> Result<(), ReportError> {
    fs::create_dir_all(dir)?;
    write_records_csv(&dir.join("records.csv"), records, config_hash)?;
    write_summary_json(&dir.join("summary.json"), summary, config_hash)?;
    write_forecast_svg(&dir.join("forecast.svg"), records, config_hash)?;
    Ok(())
}

/// Recomputes the summary from a record table on disk.
pub fn summarize_file(path: &Path) -> Result<(String, MetricsSummary), ReportError> {
    let (hash, records) = read_records_csv(path)?;
    let summary = crate::evaluation::summarize(&records).map_err(|e: EvalError| {
        ReportError::Malformed {
            line: 0,
            message: e.to_string(),
        }
    })?;
    Ok((hash, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::RecordStatus;

    fn sample_records() -> Vec<ForecastRecord> {
        vec![
            ForecastRecord {
                origin_date: "2024-01-07".parse().unwrap(),
                horizon_step: 1,
                y_true: 12,
                raw_mean: 11.2,
                mu: 11.2,
                q05: 5,
                q50: 11,
                q95: 19,
                family: Family::NegBinomial,
                n_dispersion: Some(18.5),
                p_success: Some(0.62),
                impact: 0.42,
                confidence: 0.72,
                uncertainty: 0.33,
                volatility: 0.21,
                status: RecordStatus::Ok,
            },
            ForecastRecord {
                origin_date: "2024-01-14".parse().unwrap(),
                horizon_step: 1,
                y_true: 9,
                raw_mean: 0.0,
                mu: 0.0,
                q05: 0,
                q50: 0,
                q95: 0,
                family: Family::Degenerate,
                n_dispersion: None,
                p_success: None,
                impact: 0.0,
                confidence: 0.0,
                uncertainty: 0.0,
                volatility: 0.05,
                status: RecordStatus::InvalidOrigin,
            },
        ]
    }

    #[test]
    fn csv_roundtrip_preserves_records_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let records = sample_records();
        write_records_csv(&path, &records, "cafe01").unwrap();
        let (hash, back) = read_records_csv(&path).unwrap();
        assert_eq!(hash, "cafe01");
        assert_eq!(back, records);
    }

    #[test]
    fn csv_write_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let records = sample_records();
        write_records_csv(&a, &records, "h").unwrap();
        write_records_csv(&b, &records, "h").unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn summary_json_is_canonical_and_carries_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.json");
        let summary = MetricsSummary {
            mae: 1.5,
            rmse: 2.0,
            crps: 1.1,
            coverage90: 0.9,
            n_origins: 10,
            n_excluded: 0,
        };
        write_summary_json(&path, &summary, "beef02").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["config_hash"], "beef02");
        assert_eq!(v["coverage90"], 0.9);
        // Canonical form sorts keys, so the hash comes first.
        assert!(text.starts_with("{\"config_hash\""));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn svg_band_stays_inside_the_plot() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forecast.svg");
        write_forecast_svg(&path, &sample_records(), "h").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("config_hash=h"));
        let poly = text
            .lines()
            .find(|l| l.starts_with("<polygon"))
            .expect("band polygon present");
        let points = poly.split('"').nth(1).unwrap();
        for pair in points.split_whitespace() {
            let (x, y) = pair.split_once(',').unwrap();
            let x: f64 = x.parse().unwrap();
            let y: f64 = y.parse().unwrap();
            assert!((0.0..=SVG_W).contains(&x), "x {x} inside canvas");
            // Never below the zero axis line.
            assert!(y <= SVG_H - MARGIN_B + 1e-9, "y {y} above axis");
            assert!(y >= MARGIN_T - 1e-9);
        }
    }

    #[test]
    fn svg_handles_empty_and_single_point_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.svg");
        write_forecast_svg(&empty, &[], "h").unwrap();
        assert!(fs::read_to_string(&empty)
            .unwrap()
            .contains("no scored records"));

        let single = dir.path().join("single.svg");
        write_forecast_svg(&single, &sample_records()[..1], "h").unwrap();
        let text = fs::read_to_string(&single).unwrap();
        assert!(text.contains("<polygon"));
    }
}
