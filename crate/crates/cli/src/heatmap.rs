//! Per-sentence attention heatmaps.
//!
//! Each sentence is scaled on its own: the smallest weight in the sentence is
//! intensity 0 and the largest is 1. A sentence whose weights are all equal
//! renders at 0.5 throughout.

const SHADES: [char; 5] = [' ', '░', '▒', '▓', '█'];

#[derive(Clone, Debug, PartialEq)]
pub struct TokenWeight {
    pub token: String,
    pub weight: f64,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapRendering {
    pub title: String,
    pub tokens: Vec<TokenWeight>,
}

/// Min-max scaling within one sentence.
pub fn normalize(weights: &[f64]) -> Vec<f64> {
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span.is_nan() || span <= 1e-12 * hi.abs() {
        return vec![0.5; weights.len()];
    }
    weights.iter().map(|w| (w - lo) / span).collect()
}

impl HeatmapRendering {
    pub fn new(title: &str, tokens: &[String], weights: &[f64]) -> Self {
        let intensities = normalize(weights);
        HeatmapRendering {
            title: title.to_string(),
            tokens: tokens
                .iter()
                .zip(weights)
                .zip(intensities)
                .map(|((t, &w), i)| TokenWeight {
                    token: t.clone(),
                    weight: w,
                    intensity: i,
                })
                .collect(),
        }
    }

    pub fn render_text(&self) -> String {
        let width = self.tokens.iter().map(|t| t.token.chars().count()).max().unwrap_or(0);
        let mut out = format!("{}:\n", self.title);
        for t in &self.tokens {
            let shade = SHADES[(t.intensity * (SHADES.len() - 1) as f64).round() as usize];
            out.push_str(&format!(
                "  {:<width$}  alpha={:.4}  intensity={:.2}  {}\n",
                t.token,
                t.weight,
                t.intensity,
                shade.to_string().repeat(8),
            ));
        }
        out
    }

    fn render_html_row(&self) -> String {
        let spans: Vec<String> = self
            .tokens
            .iter()
            .map(|t| {
                format!(
                    "<span class=\"tok\" style=\"background-color: rgba(200, 30, 30, {:.3})\" title=\"alpha={:.4}\">{}</span>",
                    t.intensity,
                    t.weight,
                    escape(&t.token)
                )
            })
            .collect();
        format!("<p><b>{}</b><br>{}</p>", escape(&self.title), spans.join(" "))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone HTML page with one row per sentence.
pub fn render_html(label: &str, maps: &[HeatmapRendering]) -> String {
    let rows: Vec<String> = maps.iter().map(HeatmapRendering::render_html_row).collect();
    format!(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Inner attention</title>\n\
         <style>body {{ font-family: sans-serif; }} .tok {{ padding: 2px 4px; border-radius: 3px; }}</style>\n\
         </head>\n<body>\n<p>predicted: <b>{}</b></p>\n{}\n</body>\n</html>\n",
        escape(label),
        rows.join("\n")
    )
}
