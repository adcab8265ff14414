//! Static report rendering: attribution heatmaps as self-contained
//! HTML and distribution box plots as SVG.
//!
//! Heatmaps underline each rule word with an intensity proportional to
//! |score| / scale, hue by sign (red positive, blue negative), stop
//! words unmarked. Two normalization regimes exist: `shared-max` gives
//! every model of a sample the same scale (the sample's maximum
//! absolute score across all models) so magnitudes compare across
//! models; `per-model` scales each rendering by its own maximum so each
//! model's relative pattern shows at full contrast.
//!
//! Rendering is a pure function of its inputs: identical inputs produce
//! byte-identical documents. Every number a figure encodes is also
//! available as a machine-readable dump so tests assert values, not
//! pixels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::BoxSummary;
use crate::attribution::AttributionRecord;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("record for sample \"{sample_id}\", model \"{model_id}\" has no scored words")]
    NoScoredWords { sample_id: String, model_id: String },
    #[error("all scores are zero in normalization group {group}")]
    DegenerateScale { group: String },
    #[error("nothing to render")]
    EmptyInput,
    #[error("duplicate record for sample \"{sample_id}\", model \"{model_id}\"")]
    DuplicateRecord { sample_id: String, model_id: String },
}

/// Color-scale normalization regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalizationMode {
    #[serde(rename = "shared-max")]
    SharedMax,
    #[serde(rename = "per-model")]
    PerModel,
}

impl std::str::FromStr for NormalizationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shared-max" => Ok(NormalizationMode::SharedMax),
            "per-model" => Ok(NormalizationMode::PerModel),
            other => Err(format!(
                "unknown mode \"{other}\"; expected \"shared-max\" or \"per-model\""
            )),
        }
    }
}

impl std::fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormalizationMode::SharedMax => "shared-max",
            NormalizationMode::PerModel => "per-model",
        })
    }
}

/// Color-scale endpoints per (sample_id, model_id). In shared-max mode
/// every model of a sample shares the sample's maximum absolute score;
/// in per-model mode each record gets its own maximum.
pub fn compute_scale(
    records: &[AttributionRecord],
    mode: NormalizationMode,
) -> Result<BTreeMap<(String, String), f64>, ReportError> {
    let mut own_max: BTreeMap<(String, String), f64> = BTreeMap::new();
    for record in records {
        let key = (record.sample_id.clone(), record.model_id.clone());
        let scores = record.score_vector();
        if scores.is_empty() {
            return Err(ReportError::NoScoredWords {
                sample_id: record.sample_id.clone(),
                model_id: record.model_id.clone(),
            });
        }
        let max_abs = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if own_max.insert(key, max_abs).is_some() {
            return Err(ReportError::DuplicateRecord {
                sample_id: record.sample_id.clone(),
                model_id: record.model_id.clone(),
            });
        }
    }
    match mode {
        NormalizationMode::PerModel => {
            for ((sample, model), scale) in &own_max {
                if *scale == 0.0 {
                    return Err(ReportError::DegenerateScale {
                        group: format!("(sample \"{sample}\", model \"{model}\")"),
                    });
                }
            }
            Ok(own_max)
        }
        NormalizationMode::SharedMax => {
            let mut sample_max: BTreeMap<&String, f64> = BTreeMap::new();
            for ((sample, _), scale) in &own_max {
                let entry = sample_max.entry(sample).or_insert(0.0);
                *entry = entry.max(*scale);
            }
            let shared: BTreeMap<(String, String), f64> = own_max
                .keys()
                .map(|(sample, model)| ((sample.clone(), model.clone()), sample_max[sample]))
                .collect();
            for ((sample, _), scale) in &shared {
                if *scale == 0.0 {
                    return Err(ReportError::DegenerateScale {
                        group: format!("sample \"{sample}\""),
                    });
                }
            }
            Ok(shared)
        }
    }
}

// ---------------------------------------------------------------------------
// Heatmap
// ---------------------------------------------------------------------------

/// Machine-readable dump of exactly what a heatmap renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapJson {
    pub mode: NormalizationMode,
    pub config_digest: String,
    pub samples: Vec<HeatmapSampleJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSampleJson {
    pub sample_id: String,
    pub models: Vec<HeatmapModelJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapModelJson {
    pub model_id: String,
    pub scale: f64,
    pub words: Vec<HeatmapWordJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapWordJson {
    pub w: String,
    pub i: usize,
    pub excluded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
}

/// A rendered heatmap: the self-contained HTML document plus the
/// numbers behind it.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub html: String,
    pub json: HeatmapJson,
}

const POSITIVE_RGB: (u8, u8, u8) = (214, 39, 40);
const NEGATIVE_RGB: (u8, u8, u8) = (31, 119, 180);

/// Render one heatmap over any number of models. Samples appear in
/// first-seen input order, models in sorted order within each sample;
/// every word of every rule renders in word order.
pub fn render_heatmap(
    records: &[AttributionRecord],
    mode: NormalizationMode,
) -> Result<Heatmap, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let scales = compute_scale(records, mode)?;

    // group by sample, preserving input order of first appearance
    let mut sample_order: Vec<&str> = Vec::new();
    let mut grouped: BTreeMap<&str, BTreeMap<&str, &AttributionRecord>> = BTreeMap::new();
    for record in records {
        if !grouped.contains_key(record.sample_id.as_str()) {
            sample_order.push(&record.sample_id);
        }
        grouped
            .entry(&record.sample_id)
            .or_default()
            .insert(&record.model_id, record);
    }

    let mut model_ids: Vec<&str> = records
        .iter()
        .map(|r| r.model_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    model_ids.sort_unstable();
    let config_digest = records[0].config_digest.clone();

    let mut samples_json = Vec::new();
    let mut body = String::new();
    for sample_id in &sample_order {
        let models = &grouped[sample_id];
        let mut models_json = Vec::new();
        writeln!(body, "<section class=\"sample\">").unwrap();
        writeln!(body, "<h2>{}</h2>", escape_html(sample_id)).unwrap();
        for (model_id, record) in models {
            let scale = scales[&(sample_id.to_string(), model_id.to_string())];
            let mut words_json = Vec::new();
            writeln!(
                body,
                "<div class=\"rendering\" data-model=\"{}\" data-scale=\"{}\">",
                escape_html(model_id),
                scale
            )
            .unwrap();
            writeln!(
                body,
                "<h3>{} <span class=\"scale\">(scale {:.6})</span></h3>",
                escape_html(model_id),
                scale
            )
            .unwrap();
            write!(body, "<p class=\"rule\">").unwrap();
            for (pos, entry) in record.entries.iter().enumerate() {
                if pos > 0 {
                    body.push(' ');
                }
                match entry.score {
                    Some(score) => {
                        let intensity = score.abs() / scale;
                        let (r, g, b) = if score >= 0.0 { POSITIVE_RGB } else { NEGATIVE_RGB };
                        write!(
                            body,
                            "<span class=\"w\" style=\"border-bottom:3px solid rgba({r},{g},{b},{intensity:.6})\" data-i=\"{}\" data-score=\"{}\" data-intensity=\"{intensity:.6}\">{}</span>",
                            entry.index,
                            score,
                            escape_html(&entry.word)
                        )
                        .unwrap();
                        words_json.push(HeatmapWordJson {
                            w: entry.word.clone(),
                            i: entry.index,
                            excluded: false,
                            score: Some(score),
                            intensity: Some(intensity),
                        });
                    }
                    None => {
                        write!(
                            body,
                            "<span class=\"w stop\">{}</span>",
                            escape_html(&entry.word)
                        )
                        .unwrap();
                        words_json.push(HeatmapWordJson {
                            w: entry.word.clone(),
                            i: entry.index,
                            excluded: true,
                            score: None,
                            intensity: None,
                        });
                    }
                }
            }
            writeln!(body, "</p>\n</div>").unwrap();
            models_json.push(HeatmapModelJson {
                model_id: model_id.to_string(),
                scale,
                words: words_json,
            });
        }
        writeln!(body, "</section>").unwrap();
        samples_json.push(HeatmapSampleJson {
            sample_id: sample_id.to_string(),
            models: models_json,
        });
    }

    let html = format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Attribution heatmap</title>\n<style>\nbody {{ font-family: Georgia, 'Times New Roman', serif; margin: 2em auto; max-width: 72em; padding: 0 1em; }}\nh2 {{ border-bottom: 1px solid #ddd; padding-bottom: 0.2em; }}\nh3 {{ margin: 0.3em 0; font-family: monospace; font-size: 1em; }}\nh3 .scale {{ color: #777; font-weight: normal; }}\n.sample {{ margin-bottom: 2.5em; }}\n.rule {{ line-height: 2.2; margin: 0.3em 0 1em 0; }}\n.w {{ padding-bottom: 1px; }}\n.legend {{ color: #444; font-size: 0.9em; }}\n</style>\n</head>\n<body>\n<h1>Attribution heatmap</h1>\n<p class=\"legend\">mode: {mode} | models: {models} | config: {digest} | red underline = positive score, blue = negative, intensity = |score| / scale, stop words unmarked</p>\n{body}</body>\n</html>\n",
        mode = mode,
        models = escape_html(&model_ids.join(", ")),
        digest = escape_html(&config_digest),
        body = body,
    );

    Ok(Heatmap {
        html,
        json: HeatmapJson {
            mode,
            config_digest,
            samples: samples_json,
        },
    })
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            other => out.push(other),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Box plot
// ---------------------------------------------------------------------------

/// Machine-readable dump of a box-plot figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotJson {
    pub title: String,
    pub groups: BTreeMap<String, BoxSummary>,
}

/// A rendered box plot: the SVG document plus the numbers behind it.
#[derive(Debug, Clone)]
pub struct Boxplot {
    pub svg: String,
    pub json: BoxplotJson,
}

const PLOT_TOP: f64 = 50.0;
const PLOT_BOTTOM_MARGIN: f64 = 60.0;
const PLOT_LEFT: f64 = 70.0;
const PLOT_RIGHT_MARGIN: f64 = 24.0;
const PLOT_HEIGHT: f64 = 280.0;
const COLUMN_WIDTH: f64 = 110.0;
const BOX_WIDTH: f64 = 56.0;

/// One box-and-whisker glyph per group, in label-sorted order, outliers
/// as discrete marks. Every glyph carries its summary numbers as
/// `data-*` attributes.
pub fn render_boxplot(
    groups: &BTreeMap<String, BoxSummary>,
    title: &str,
) -> Result<Boxplot, ReportError> {
    if groups.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in groups.values() {
        lo = lo.min(b.whisker_low);
        hi = hi.max(b.whisker_high);
        for o in &b.outliers {
            lo = lo.min(*o);
            hi = hi.max(*o);
        }
    }
    let pad = if hi > lo { (hi - lo) * 0.06 } else { 0.5 };
    let (y_min, y_max) = (lo - pad, hi + pad);

    let width = PLOT_LEFT + groups.len() as f64 * COLUMN_WIDTH + PLOT_RIGHT_MARGIN;
    let height = PLOT_TOP + PLOT_HEIGHT + PLOT_BOTTOM_MARGIN;
    let y = |v: f64| PLOT_TOP + (y_max - v) / (y_max - y_min) * PLOT_HEIGHT;

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"Georgia, serif\">"
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" font-weight=\"bold\">{}</text>",
        width / 2.0,
        escape_html(title)
    )
    .unwrap();

    // y axis with five ticks
    writeln!(
        svg,
        "<line x1=\"{PLOT_LEFT:.2}\" y1=\"{PLOT_TOP:.2}\" x2=\"{PLOT_LEFT:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>",
        PLOT_TOP + PLOT_HEIGHT
    )
    .unwrap();
    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let ty = y(v);
        writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{ty:.2}\" x2=\"{PLOT_LEFT:.2}\" y2=\"{ty:.2}\" stroke=\"black\" stroke-width=\"1\"/>",
            PLOT_LEFT - 6.0
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{v:.3}</text>",
            PLOT_LEFT - 9.0,
            ty + 4.0
        )
        .unwrap();
        writeln!(
            svg,
            "<line x1=\"{PLOT_LEFT:.2}\" y1=\"{ty:.2}\" x2=\"{:.2}\" y2=\"{ty:.2}\" stroke=\"#eee\" stroke-width=\"1\"/>",
            width - PLOT_RIGHT_MARGIN
        )
        .unwrap();
    }

    for (idx, (label, b)) in groups.iter().enumerate() {
        let cx = PLOT_LEFT + (idx as f64 + 0.5) * COLUMN_WIDTH;
        let half = BOX_WIDTH / 2.0;
        let outlier_list = b
            .outliers
            .iter()
            .map(|o| o.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(
            svg,
            "<g class=\"box-group\" data-label=\"{}\" data-median=\"{}\" data-q1=\"{}\" data-q3=\"{}\" data-whisker-low=\"{}\" data-whisker-high=\"{}\" data-n=\"{}\" data-outliers=\"{}\">",
            escape_html(label),
            b.median,
            b.q1,
            b.q3,
            b.whisker_low,
            b.whisker_high,
            b.n,
            escape_html(&outlier_list)
        )
        .unwrap();
        // whiskers
        writeln!(
            svg,
            "<line x1=\"{cx:.2}\" y1=\"{:.2}\" x2=\"{cx:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>",
            y(b.whisker_high),
            y(b.q3)
        )
        .unwrap();
        writeln!(
            svg,
            "<line x1=\"{cx:.2}\" y1=\"{:.2}\" x2=\"{cx:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>",
            y(b.q1),
            y(b.whisker_low)
        )
        .unwrap();
        for v in [b.whisker_low, b.whisker_high] {
            writeln!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>",
                cx - half / 2.0,
                y(v),
                cx + half / 2.0,
                y(v)
            )
            .unwrap();
        }
        // box and median
        writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{BOX_WIDTH:.2}\" height=\"{:.2}\" fill=\"#9ecae1\" stroke=\"black\" stroke-width=\"1\"/>",
            cx - half,
            y(b.q3),
            (y(b.q1) - y(b.q3)).max(0.0)
        )
        .unwrap();
        writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"2\"/>",
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        )
        .unwrap();
        for o in &b.outliers {
            writeln!(
                svg,
                "<circle cx=\"{cx:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>",
                y(*o)
            )
            .unwrap();
        }
        writeln!(
            svg,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            PLOT_TOP + PLOT_HEIGHT + 24.0,
            escape_html(label)
        )
        .unwrap();
        writeln!(svg, "</g>").unwrap();
    }
    writeln!(svg, "</svg>").unwrap();

    Ok(Boxplot {
        svg,
        json: BoxplotJson {
            title: title.to_string(),
            groups: groups.clone(),
        },
    })
}
