//! Prompt preprocessing, keyword-to-box assignment, and layout export.
//!
//! Keywords come from double-quoted spans of the prompt. A trained policy
//! places one box per keyword; box `i` carries keyword `i`. When there are
//! more keywords than boxes the surplus words join the last box's label.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval_bench::{run_episode, LayoutPolicy};
use crate::geometry::{total_overlap, Rect};
use crate::glyph_env::{EnvConfig, GlyphEnv};
use crate::policy_net::PolicyParams;
use crate::scalar::Scalar;
use crate::seed::{derive_rng, derive_seed, Rng};

static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""([^"]*)""#).expect("static regex"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptSpec {
    pub raw_prompt: String,
    pub keywords: Vec<String>,
    pub keyword_string: String,
}

/// Splits every double-quoted span on whitespace, left to right.
pub fn extract_keywords(prompt: &str) -> PromptSpec {
    let keywords: Vec<String> = QUOTED
        .captures_iter(prompt)
        .flat_map(|c| {
            c.get(1)
                .map_or("", |m| m.as_str())
                .split_whitespace()
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .collect();
    PromptSpec {
        raw_prompt: prompt.to_string(),
        keyword_string: keywords.join("/"),
        keywords,
    }
}

/// How many boxes the layout environment gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sizing {
    /// `min(keywords, policy N)` boxes. Missing boxes are zero-padded in the
    /// observation and their action rows ignored.
    #[default]
    Keywords,
    /// Always the policy's own `N`. Boxes beyond the keyword count are
    /// placed but left unlabeled.
    Policy,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerateOptions {
    pub sizing: Sizing,
    /// Pair keywords with boxes sorted top-to-bottom, then left-to-right.
    pub reading_order: bool,
    /// Recorded in the layout metadata.
    pub checkpoint_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub keyword: String,
    #[serde(rename = "box")]
    pub rect: Rect<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutMeta {
    pub checkpoint: String,
    pub seed: u64,
    pub num_rectan: usize,
    pub steps: usize,
    /// Total overlap of all boxes placed by the environment.
    pub final_overlap: f64,
    pub succeeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub window_size: f64,
    pub entries: Vec<LayoutEntry>,
    pub metadata: LayoutMeta,
}

/// Runs a `k`-box environment with an `N`-box policy, `k <= N`.
struct Padded<'a, T> {
    params: &'a PolicyParams<T>,
}

impl<T: Scalar> LayoutPolicy<T> for Padded<'_, T> {
    fn act(&self, obs: &[T], _rng: &mut Rng) -> Result<Vec<T>> {
        let mut full = obs.to_vec();
        full.resize(self.params.obs_dim(), T::zero());
        let mut a = self.params.deterministic_action(&full)?;
        a.truncate(obs.len());
        Ok(a)
    }
}

fn labels(keywords: &[String], boxes: usize) -> Vec<String> {
    if keywords.len() <= boxes {
        return keywords.to_vec();
    }
    let mut out = keywords[..boxes - 1].to_vec();
    out.push(keywords[boxes - 1..].join(" "));
    out
}

/// Places one box per keyword with a deterministic rollout of `policy`.
/// The env takes every field but `num_rectan` and `seed` from `template`.
pub fn generate_layout<T: Scalar>(
    spec: &PromptSpec,
    policy: &PolicyParams<T>,
    template: &EnvConfig<T>,
    seed: u64,
    opts: &GenerateOptions,
) -> Result<Layout> {
    if spec.keywords.is_empty() {
        return Err(Error::EmptyLayout);
    }
    let policy_n = policy.num_rectan();
    if policy.obs_dim() != policy.action_dim() || policy_n == 0 {
        return Err(Error::DimensionMismatch {
            what: "policy observation vs action width",
            expected: policy.obs_dim(),
            got: policy.action_dim(),
        });
    }
    let boxes = match opts.sizing {
        Sizing::Keywords => spec.keywords.len().min(policy_n),
        Sizing::Policy => policy_n,
    };
    let mut env = GlyphEnv::new(EnvConfig {
        num_rectan: boxes,
        seed: derive_seed(seed, "env", 0),
        ..template.clone()
    })?;
    let m = run_episode(
        &mut env,
        &Padded { params: policy },
        &mut derive_rng(seed, "eval_actions", 0),
    )?;

    let mut rects: Vec<Rect<f64>> = env
        .state()
        .iter()
        .map(|r| Rect::new(r.x1.to_f64_lossy(), r.y1.to_f64_lossy(), r.x2.to_f64_lossy(), r.y2.to_f64_lossy()))
        .collect();
    let final_overlap = total_overlap(&rects);
    if opts.reading_order {
        rects.sort_by(|a, b| a.y1.total_cmp(&b.y1).then(a.x1.total_cmp(&b.x1)));
    }
    let entries = labels(&spec.keywords, rects.len())
        .into_iter()
        .zip(rects)
        .map(|(keyword, rect)| LayoutEntry { keyword, rect })
        .collect();
    Ok(Layout {
        window_size: template.window_size.to_f64_lossy(),
        entries,
        metadata: LayoutMeta {
            checkpoint: opts.checkpoint_id.clone(),
            seed,
            num_rectan: boxes,
            steps: m.steps,
            final_overlap,
            succeeded: m.succeeded,
        },
    })
}

pub const LAYOUT_FORMAT: &str = "glyph-layout-boxes";
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct DocEntry {
    keyword: String,
    #[serde(rename = "box")]
    coords: [i64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct LayoutDocument {
    format: String,
    version: u32,
    window_size: f64,
    entries: Vec<DocEntry>,
    metadata: LayoutMeta,
}

/// Rounds half away from zero, then clamps into `[0, floor(window_size)]`.
pub fn quantize(v: f64, window_size: f64) -> i64 {
    let hi = window_size.floor() as i64;
    (v.round() as i64).clamp(0, hi)
}

/// Versioned pretty-printed JSON with integer box coordinates.
pub fn serialize_layout(layout: &Layout) -> Result<String> {
    if layout.entries.is_empty() {
        return Err(Error::EmptyLayout);
    }
    let w = layout.window_size;
    let doc = LayoutDocument {
        format: LAYOUT_FORMAT.to_string(),
        version: LAYOUT_VERSION,
        window_size: w,
        entries: layout
            .entries
            .iter()
            .map(|e| DocEntry {
                keyword: e.keyword.clone(),
                coords: e.rect.to_array().map(|c| quantize(c, w)),
            })
            .collect(),
        metadata: layout.metadata.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_layout(text: &str) -> Result<Layout> {
    let doc: LayoutDocument = serde_json::from_str(text)?;
    if doc.format != LAYOUT_FORMAT || doc.version != LAYOUT_VERSION {
        return Err(Error::Parse(format!(
            "expected {LAYOUT_FORMAT} v{LAYOUT_VERSION}, found {} v{}",
            doc.format, doc.version
        )));
    }
    Ok(Layout {
        window_size: doc.window_size,
        entries: doc
            .entries
            .into_iter()
            .map(|e| LayoutEntry {
                keyword: e.keyword,
                rect: Rect::from_slice(&e.coords.map(|c| c as f64)),
            })
            .collect(),
        metadata: doc.metadata,
    })
}

pub const PALETTE: [&str; 8] = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#9a6324",
];

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Standalone SVG: one outlined `<rect>` and one `<text>` label per entry.
/// Entry `i` uses `PALETTE[i % 8]`.
pub fn render_svg(layout: &Layout, scale: f64) -> String {
    let side = layout.window_size * scale;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{side}\" height=\"{side}\" viewBox=\"0 0 {side} {side}\">\n"
    );
    for (i, e) in layout.entries.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let r = &e.rect;
        let (x, y, w, h) = (r.x1 * scale, r.y1 * scale, r.width() * scale, r.height() * scale);
        let font = (10.0 * scale).min(h * 0.8).max(1.0);
        s.push_str(&format!(
            "  <rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{}\"/>\n",
            scale.max(0.5)
        ));
        s.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"{font}\" fill=\"{color}\">{}</text>\n",
            x + 0.1 * font,
            y + font,
            xml_escape(&e.keyword)
        ));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn extraction_examples() {
        let s = extract_keywords("a poster of \"Deep Learning Summit\"");
        assert_eq!(s.keywords, words(&["Deep", "Learning", "Summit"]));
        assert_eq!(s.keyword_string, "Deep/Learning/Summit");

        let s = extract_keywords("no quotes here");
        assert!(s.keywords.is_empty());
        assert_eq!(s.keyword_string, "");

        let s = extract_keywords("\"A\" and \"B C\"");
        assert_eq!(s.keyword_string, "A/B/C");

        assert_eq!(extract_keywords("\"A/B\"").keywords, words(&["A/B"]));
        assert_eq!(extract_keywords("it's 'single' \"\" \"  x\ty \"").keywords, words(&["x", "y"]));
    }

    #[test]
    fn overflow_merges_into_last_label() {
        let kw = words(&["a", "b", "c", "d", "e", "f", "g"]);
        let l = labels(&kw, 5);
        assert_eq!(l.len(), 5);
        assert_eq!(l[4], "e f g");
        assert_eq!(labels(&kw[..3], 5), kw[..3].to_vec());
    }

    fn policy(n: usize) -> PolicyParams<f64> {
        let cfg = EnvConfig::<f64> { num_rectan: n, ..Default::default() };
        PolicyParams::for_env(&cfg, &mut derive_rng(5, "policy_init", 0))
    }

    fn template() -> EnvConfig<f64> {
        EnvConfig { max_steps: 50, ..Default::default() }
    }

    #[test]
    fn arity_rules() {
        let p = policy(5);
        let opts = GenerateOptions::default();
        let seven = extract_keywords("\"a b c d e f g\"");
        let l = generate_layout(&seven, &p, &template(), 1, &opts).unwrap();
        assert_eq!(l.entries.len(), 5);
        assert_eq!(l.entries[4].keyword.split(' ').count(), 3);

        let five = extract_keywords("\"a b c d e\"");
        let l = generate_layout(&five, &p, &template(), 1, &opts).unwrap();
        assert_eq!(l.entries.len(), 5);
        assert!(l.metadata.final_overlap.is_finite());

        let one = extract_keywords("\"solo\"");
        let l = generate_layout(&one, &p, &template(), 1, &opts).unwrap();
        assert_eq!(l.entries.len(), 1);
        assert_eq!(l.metadata.steps, 1);
        assert!(l.metadata.succeeded);

        let two = extract_keywords("\"x y\"");
        let full = GenerateOptions { sizing: Sizing::Policy, ..Default::default() };
        let l = generate_layout(&two, &p, &template(), 1, &full).unwrap();
        assert_eq!((l.entries.len(), l.metadata.num_rectan), (2, 5));
    }

    #[test]
    fn empty_prompt_is_rejected() {
        let e = generate_layout(&extract_keywords("plain"), &policy(5), &template(), 0, &Default::default());
        assert!(matches!(e, Err(Error::EmptyLayout)));
    }

    #[test]
    fn generation_is_deterministic_and_reading_order_sorts() {
        let spec = extract_keywords("\"one two three four\"");
        let p = policy(5);
        let a = generate_layout(&spec, &p, &template(), 9, &Default::default()).unwrap();
        assert_eq!(a, generate_layout(&spec, &p, &template(), 9, &Default::default()).unwrap());
        let opts = GenerateOptions { reading_order: true, ..Default::default() };
        let b = generate_layout(&spec, &p, &template(), 9, &opts).unwrap();
        for w in b.entries.windows(2) {
            let (p, q) = (&w[0].rect, &w[1].rect);
            assert!(p.y1 < q.y1 || (p.y1 == q.y1 && p.x1 <= q.x1));
        }
        let mut sa: Vec<_> = a.entries.iter().map(|e| e.rect.to_array().map(f64::to_bits)).collect();
        let mut sb: Vec<_> = b.entries.iter().map(|e| e.rect.to_array().map(f64::to_bits)).collect();
        sa.sort();
        sb.sort();
        assert_eq!(sa, sb);
    }

    #[test]
    fn serialization_round_trip() {
        let spec = extract_keywords("poster \"SALE <&> TODAY\"");
        let l = generate_layout(&spec, &policy(5), &template(), 3, &Default::default()).unwrap();
        let s = serialize_layout(&l).unwrap();
        let back = parse_layout(&s).unwrap();
        assert_eq!(serialize_layout(&back).unwrap(), s);
        for e in &back.entries {
            for c in e.rect.to_array() {
                assert!((0.0..=128.0).contains(&c) && c.fract() == 0.0);
            }
        }
        let empty = Layout { entries: vec![], ..l };
        assert!(matches!(serialize_layout(&empty), Err(Error::EmptyLayout)));
        assert!(parse_layout(&s.replace(LAYOUT_FORMAT, "other")).is_err());
    }

    #[test]
    fn quantization_rounds_half_away_and_clamps() {
        assert_eq!(quantize(2.5, 128.0), 3);
        assert_eq!(quantize(2.4999, 128.0), 2);
        assert_eq!(quantize(127.5, 128.0), 128);
        assert_eq!(quantize(128.4, 128.0), 128);
        assert_eq!(quantize(-0.5, 128.0), 0);
    }

    fn sample_layout(n: usize) -> Layout {
        Layout {
            window_size: 128.0,
            entries: (0..n)
                .map(|i| LayoutEntry {
                    keyword: format!("w{i}"),
                    rect: Rect::new(10.0, 10.0, 60.0, 40.0),
                })
                .collect(),
            metadata: LayoutMeta {
                checkpoint: "untrained".into(),
                seed: 0,
                num_rectan: n,
                steps: 1,
                final_overlap: 0.0,
                succeeded: true,
            },
        }
    }

    #[test]
    fn svg_structure() {
        let mut l = sample_layout(5);
        l.entries[0].keyword = "a<b & \"c\"".into();
        let svg = render_svg(&l, 2.0);
        assert_eq!(svg.matches("<rect ").count(), 5);
        assert_eq!(svg.matches("<text ").count(), 5);
        assert!(svg.contains("width=\"256\" height=\"256\""));
        assert!(svg.contains("a&lt;b &amp; &quot;c&quot;"));
        // identical boxes still get distinct strokes
        for c in &PALETTE[..5] {
            assert_eq!(svg.matches(&format!("stroke=\"{c}\"")).count(), 1);
        }
        assert_eq!(render_svg(&sample_layout(9), 1.0).matches(PALETTE[0]).count(), 4);
    }

    proptest! {
        #[test]
        fn keyword_string_is_slash_join(s in "[a-z \"/]{0,40}") {
            let spec = extract_keywords(&s);
            prop_assert_eq!(&spec.keyword_string, &spec.keywords.join("/"));
            prop_assert!(spec.keywords.iter().all(|w| !w.is_empty() && !w.contains(char::is_whitespace)));
            if !s.contains('"') {
                prop_assert!(spec.keywords.is_empty());
            }
        }

        #[test]
        fn quantized_coords_stay_in_window(v in -50.0f64..200.0, w in 1.0f64..300.0) {
            let q = quantize(v, w);
            prop_assert!(q >= 0 && q as f64 <= w);
        }
    }
}
