//! Synthetic identity-card corpus: rendered class sources plus jittered, noisy and
//! spotlit samples with matching OCR fixtures, so the whole pipeline can be exercised
//! without a real document collection.

mod glyphs;

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use glyphs::{glyph, GLYPH_H, GLYPH_W};

use crate::imaging::{luma, rotate_scale, Image, ImagingError};
use crate::persist::{self, PersistError};
use crate::pipeline::{ClassEntry, Manifest, MANIFEST_SCHEMA};
use crate::textmatch::{FixtureProvider, Tier};
use crate::ClassId;

pub const CARD_SIZE: (u32, u32) = (425, 270);
pub const BACKDROP: [u8; 3] = [92, 94, 98];
const BANNER_HEIGHT: u32 = 56;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid card spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("csv: {0}")]
    Csv(String),
}

/// Per-sample distortion ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub max_rotation_deg: f64,
    pub min_scale: f64,
    pub max_scale: f64,
    /// Uniform per-channel noise amplitude.
    pub noise: u8,
    pub spotlight_prob: f64,
    /// Aim spotlights at a banner word instead of a random spot.
    pub spotlight_on_banner: bool,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        max_rotation_deg: 0.0,
        min_scale: 1.0,
        max_scale: 1.0,
        noise: 0,
        spotlight_prob: 0.0,
        spotlight_on_banner: false,
    };

    pub fn is_zero(&self) -> bool {
        *self == Self::NONE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterProfile {
    None,
    Clean,
    Degraded,
}

impl JitterProfile {
    pub fn jitter(self) -> Jitter {
        match self {
            JitterProfile::None => Jitter::NONE,
            JitterProfile::Clean => Jitter {
                max_rotation_deg: 4.0,
                min_scale: 0.9,
                max_scale: 1.0,
                noise: 6,
                spotlight_prob: 0.0,
                spotlight_on_banner: false,
            },
            JitterProfile::Degraded => Jitter {
                max_rotation_deg: 10.0,
                min_scale: 0.8,
                max_scale: 1.0,
                noise: 10,
                spotlight_prob: 0.6,
                spotlight_on_banner: true,
            },
        }
    }
}

impl std::str::FromStr for JitterProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(JitterProfile::None),
            "clean" => Ok(JitterProfile::Clean),
            "degraded" => Ok(JitterProfile::Degraded),
            _ => Err(format!("unknown jitter profile {s:?} (none, clean, degraded)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCardSpec {
    pub class_id: ClassId,
    pub name: String,
    pub background: [u8; 3],
    pub banner: [u8; 3],
    /// Drives the photo, field text and decorations. Classes sharing a seed share a layout.
    pub layout_seed: u64,
    pub banner_words: Vec<String>,
    pub title_words: Vec<String>,
    /// Endorsement line near the bottom, e.g. a vehicle class.
    pub endorsement_words: Vec<String>,
    pub jitter: Jitter,
}

impl SyntheticCardSpec {
    /// Every word printed by the issuer; these become the class keywords.
    pub fn keywords(&self) -> impl Iterator<Item = &str> {
        self.banner_words
            .iter()
            .chain(&self.title_words)
            .chain(&self.endorsement_words)
            .map(String::as_str)
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Ten classes with the usual hard cases: two QLD cards that differ only by an
/// endorsement line, and two NSW cards with one layout in different colours.
pub fn default_specs(profile: JitterProfile) -> Vec<SyntheticCardSpec> {
    let rows: [(u32, &str, [u8; 3], [u8; 3], u64, &str, &str, &str); 10] = [
        (1, "NSW driver licence", [235, 232, 200], [20, 60, 140], 11, "NEW SOUTH WALES", "DRIVER LICENCE", ""),
        (2, "NSW provisional licence", [240, 196, 196], [170, 20, 30], 11, "NEW SOUTH WALES", "PROVISIONAL LICENCE", ""),
        (3, "QLD driver licence", [228, 240, 222], [120, 20, 50], 23, "QUEENSLAND", "DRIVER LICENCE", ""),
        (4, "QLD heavy vehicle licence", [228, 240, 222], [120, 20, 50], 23, "QUEENSLAND", "DRIVER LICENCE", "HEAVY VEHICLE"),
        (5, "VIC driver licence", [214, 230, 214], [0, 100, 60], 37, "VICTORIA", "DRIVER LICENCE", ""),
        (6, "SA driver licence", [245, 235, 212], [200, 120, 0], 41, "SOUTH AUSTRALIA", "DRIVER LICENCE", ""),
        (7, "WA driver licence", [238, 238, 238], [0, 0, 0], 53, "WESTERN AUSTRALIA", "DRIVER LICENCE", ""),
        (8, "TAS driver licence", [220, 235, 245], [0, 120, 160], 67, "TASMANIA", "DRIVER LICENCE", ""),
        (9, "Passport", [208, 214, 236], [30, 30, 90], 71, "AUSTRALIA", "PASSPORT", ""),
        (10, "Proof of age card", [245, 224, 240], [120, 40, 140], 83, "PHOTO CARD", "PROOF OF AGE", ""),
    ];
    rows.iter()
        .map(|&(id, name, background, banner, layout_seed, b, t, e)| SyntheticCardSpec {
            class_id: ClassId(id),
            name: name.into(),
            background,
            banner,
            layout_seed,
            banner_words: words(b),
            title_words: words(t),
            endorsement_words: words(e),
            jitter: profile.jitter(),
        })
        .collect()
}

pub fn validate_specs(specs: &[SyntheticCardSpec]) -> Result<(), SynthError> {
    if specs.is_empty() {
        return Err(SynthError::InvalidSpec("no classes".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if specs[..i].iter().any(|o| o.class_id == s.class_id) {
            return Err(SynthError::InvalidSpec(format!("duplicate class id {}", s.class_id)));
        }
        if s.keywords().next().is_none() {
            return Err(SynthError::InvalidSpec(format!("class {} prints no words", s.class_id)));
        }
        if let Some(w) = s.keywords().find(|w| w.is_empty() || w.chars().any(|c| c == ' ' || glyph(c).is_none())) {
            return Err(SynthError::InvalidSpec(format!("class {}: cannot render word {w:?}", s.class_id)));
        }
        let j = &s.jitter;
        if !(j.min_scale > 0.0 && j.min_scale <= j.max_scale && j.max_scale <= 1.0)
            || !(0.0..=1.0).contains(&j.spotlight_prob)
            || !(0.0..=45.0).contains(&j.max_rotation_deg)
        {
            return Err(SynthError::InvalidSpec(format!("class {}: jitter out of range", s.class_id)));
        }
    }
    Ok(())
}

/// A printed word and the centre of its box in image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedWord {
    pub word: String,
    pub center: (f64, f64),
    /// Field values are printed but are not class keywords.
    pub keyword: bool,
}

pub struct RenderedCard {
    pub image: Image,
    pub words: Vec<PlacedWord>,
}

fn fill_rect(img: &mut Image, x0: i64, y0: i64, w: i64, h: i64, rgb: [u8; 3]) {
    let (iw, ih) = (img.width() as i64, img.height() as i64);
    for y in y0.max(0)..(y0 + h).min(ih) {
        for x in x0.max(0)..(x0 + w).min(iw) {
            img.set_pixel(x as u32, y as u32, &rgb);
        }
    }
}

fn fill_ellipse(img: &mut Image, cx: f64, cy: f64, rx: f64, ry: f64, rgb: [u8; 3]) {
    let (x0, x1) = ((cx - rx).floor() as i64, (cx + rx).ceil() as i64);
    let (y0, y1) = ((cy - ry).floor() as i64, (cy + ry).ceil() as i64);
    for y in y0.max(0)..=y1.min(img.height() as i64 - 1) {
        for x in x0.max(0)..=x1.min(img.width() as i64 - 1) {
            let (dx, dy) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
            if dx * dx + dy * dy <= 1.0 {
                img.set_pixel(x as u32, y as u32, &rgb);
            }
        }
    }
}

fn text_width(text: &str, scale: u32) -> u32 {
    text.chars().count() as u32 * (GLYPH_W + 1) * scale
}

/// Draws `text` with its top-left corner at `(x, y)` and returns the centre of each
/// space-separated word.
fn draw_text(img: &mut Image, x: i64, y: i64, scale: u32, rgb: [u8; 3], text: &str) -> Vec<(String, (f64, f64))> {
    let advance = ((GLYPH_W + 1) * scale) as i64;
    for (i, c) in text.chars().enumerate() {
        let g = glyph(c).unwrap_or([0; 7]);
        let gx = x + i as i64 * advance;
        for (row, bits) in g.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                    let px = gx + (col * scale) as i64;
                    let py = y + (row as u32 * scale) as i64;
                    fill_rect(img, px, py, scale as i64, scale as i64, rgb);
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut col = 0usize;
    for w in text.split(' ') {
        if !w.is_empty() {
            let left = x as f64 + (col as i64 * advance) as f64;
            let width = (w.chars().count() as i64 * advance) as f64 - scale as f64;
            out.push((w.to_string(), (left + width / 2.0, y as f64 + (GLYPH_H * scale) as f64 / 2.0)));
        }
        col += w.chars().count() + 1;
    }
    out
}

fn random_letters(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| (b'A' + rng.random_range(0..26u8)) as char).collect()
}

fn random_digits(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| (b'0' + rng.random_range(0..10u8)) as char).collect()
}

fn shade(rgb: [u8; 3], f: f64) -> [u8; 3] {
    rgb.map(|c| (c as f64 * f).round().clamp(0.0, 255.0) as u8)
}

/// Clean class source at [`CARD_SIZE`].
pub fn render_card(spec: &SyntheticCardSpec) -> RenderedCard {
    let (w, h) = CARD_SIZE;
    let mut img = Image::filled(w, h, spec.background);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.layout_seed);
    let mut placed = Vec::new();
    let mut place = |list: Vec<(String, (f64, f64))>, keyword: bool| {
        placed.extend(list.into_iter().map(|(word, center)| PlacedWord { word, center, keyword }));
    };

    // banner
    fill_rect(&mut img, 0, 0, w as i64, BANNER_HEIGHT as i64, spec.banner);
    let ink = if luma(spec.banner) < 128 { [250, 250, 250] } else { [15, 15, 15] };
    let banner = spec.banner_words.join(" ");
    let bx = (w as i64 - text_width(&banner, 3) as i64) / 2;
    place(draw_text(&mut img, bx.max(4), 17, 3, ink, &banner), true);

    let dark = [28, 28, 36];
    place(draw_text(&mut img, 20, 66, 2, dark, &spec.title_words.join(" ")), true);

    // photo with head and shoulders
    let tone = rng.random_range(150..215u8);
    fill_rect(&mut img, 20, 96, 110, 150, [tone, tone, tone.saturating_add(12)]);
    let skin = [rng.random_range(150..235u8), rng.random_range(110..190u8), rng.random_range(80..160u8)];
    let hair = [rng.random_range(10..90u8), rng.random_range(10..70u8), rng.random_range(0..50u8)];
    let head_y = rng.random_range(145.0..160.0);
    fill_ellipse(&mut img, 75.0, 240.0, 46.0, 38.0, shade(skin, 0.5));
    fill_ellipse(&mut img, 75.0, head_y - 18.0, 30.0, 22.0, hair);
    fill_ellipse(&mut img, 75.0, head_y, rng.random_range(22.0..28.0), 32.0, skin);
    fill_ellipse(&mut img, 64.0, head_y - 6.0, 3.5, 2.5, dark);
    fill_ellipse(&mut img, 86.0, head_y - 6.0, 3.5, 2.5, dark);
    fill_rect(&mut img, 68, head_y as i64 + 14, 14, 3, shade(skin, 0.6));

    // personal fields
    let letters = rng.random_range(5..9);
    let fields = [
        format!("NAME {}", random_letters(&mut rng, letters)),
        format!("DOB {:02}-{:02}-19{}", rng.random_range(1..29), rng.random_range(1..13), random_digits(&mut rng, 2)),
        format!("NO {}", random_digits(&mut rng, 8)),
        format!("ADDR {} {}", rng.random_range(1..200), random_letters(&mut rng, 5)),
        format!("EXP {:02}-20{}", rng.random_range(1..13), random_digits(&mut rng, 2)),
    ];
    for (i, f) in fields.iter().enumerate() {
        place(draw_text(&mut img, 145, 100 + 22 * i as i64, 2, dark, f), false);
    }

    // seal and decorations
    for _ in 0..rng.random_range(3..6) {
        let c = [rng.random_range(0..255u8), rng.random_range(0..255u8), rng.random_range(0..255u8)];
        let (cx, cy) = (rng.random_range(350.0..410.0), rng.random_range(100.0..200.0));
        if rng.random_bool(0.5) {
            let r = rng.random_range(6.0..16.0);
            fill_ellipse(&mut img, cx, cy, r, r, c);
        } else {
            let s = rng.random_range(8..20);
            fill_rect(&mut img, cx as i64 - s / 2, cy as i64 - s / 2, s, s, c);
        }
    }
    let (amp, period, phase) = (rng.random_range(3.0..7.0), rng.random_range(25.0..60.0), rng.random_range(0.0..std::f64::consts::TAU));
    let band = shade(spec.background, 0.75);
    for x in 0..w {
        let y = 258.0 + amp * (x as f64 / period + phase).sin();
        fill_rect(&mut img, x as i64, y as i64, 1, 3, band);
    }

    if !spec.endorsement_words.is_empty() {
        place(draw_text(&mut img, 145, 224, 2, [180, 20, 20], &spec.endorsement_words.join(" ")), true);
    }
    RenderedCard { image: img, words: placed }
}

/// OCR text of a card given which words stayed legible.
fn ocr_text(words: &[PlacedWord], visible: impl Fn(&PlacedWord) -> bool) -> String {
    words.iter().filter(|w| visible(w)).map(|w| w.word.as_str()).collect::<Vec<_>>().join(" ")
}

pub struct RenderedSample {
    pub image: Image,
    pub text: String,
}

/// Deterministic sample `index` of a class: rotate and scale onto the backdrop, add
/// noise, maybe a spotlight. Words under the spotlight drop out of the OCR text.
pub fn render_sample(card: &RenderedCard, jitter: &Jitter, seed: u64, class: ClassId, index: u32) -> RenderedSample {
    if jitter.is_zero() {
        return RenderedSample {
            image: card.image.clone(),
            text: ocr_text(&card.words, |_| true),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class.0 as u64) << 32) | index as u64);
    let rnd = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let angle = rnd(&mut rng, -jitter.max_rotation_deg, jitter.max_rotation_deg).to_radians();
    let scale = rnd(&mut rng, jitter.min_scale, jitter.max_scale);
    let mut img = rotate_scale(&card.image, angle, scale, BACKDROP);
    let (w, h) = (img.width(), img.height());

    // forward map of the rotation used by rotate_scale
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (sin, cos) = angle.sin_cos();
    let moved: Vec<(f64, f64)> = card
        .words
        .iter()
        .map(|pw| {
            let (sx, sy) = (pw.center.0 - cx, pw.center.1 - cy);
            (scale * (cos * sx - sin * sy) + cx, scale * (sin * sx + cos * sy) + cy)
        })
        .collect();

    if jitter.noise > 0 {
        let n = jitter.noise as i16;
        for y in 0..h {
            for x in 0..w {
                let px = img.rgb(x, y).map(|c| (c as i16 + rng.random_range(-n..=n)).clamp(0, 255) as u8);
                img.set_pixel(x, y, &px);
            }
        }
    }

    let mut spot: Option<(f64, f64, f64)> = None;
    if rng.random_bool(jitter.spotlight_prob) {
        let r = rng.random_range(38.0..58.0);
        let banner: Vec<usize> = (0..card.words.len()).filter(|&i| card.words[i].center.1 < BANNER_HEIGHT as f64).collect();
        let (sx, sy) = if jitter.spotlight_on_banner && !banner.is_empty() {
            moved[banner[rng.random_range(0..banner.len())]]
        } else {
            (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64))
        };
        for y in 0..h {
            for x in 0..w {
                let d = ((x as f64 + 0.5 - sx).powi(2) + (y as f64 + 0.5 - sy).powi(2)).sqrt() / r;
                if d < 1.0 {
                    // saturated core, linear falloff over the outer 30%
                    let a = ((1.0 - d) / 0.3).min(1.0);
                    let px = img.rgb(x, y).map(|c| (c as f64 * (1.0 - a) + 255.0 * a).round() as u8);
                    img.set_pixel(x, y, &px);
                }
            }
        }
        spot = Some((sx, sy, r));
    }

    let mut text_words = Vec::new();
    for (pw, &(x, y)) in card.words.iter().zip(&moved) {
        let inside = x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64;
        let lit = spot.is_some_and(|(sx, sy, r)| (x - sx).hypot(y - sy) < 0.9 * r);
        if inside && !lit {
            text_words.push(pw.word.as_str());
        }
    }
    RenderedSample {
        image: img,
        text: text_words.join(" "),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenOptions {
    pub seed: u64,
    pub samples_per_class: u32,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            seed: 1,
            samples_per_class: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub sample_id: String,
    pub path: String,
    pub class_id: ClassId,
}

pub const LABELS_FILE: &str = "labels.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const OCR_FIXTURES_FILE: &str = "ocr_fixtures.json";

#[derive(Serialize)]
struct MetadataOut<'a> {
    class_id: ClassId,
    keywords: Vec<KeywordOut<'a>>,
}

#[derive(Serialize)]
struct KeywordOut<'a> {
    word: &'a str,
    tier: Tier,
}

/// Keyword file contents. A word printed by every class is type-mutual, one printed by
/// several is subclass-mutual, the rest are unique.
fn metadata_json(specs: &[SyntheticCardSpec]) -> String {
    let mut owners: BTreeMap<&str, usize> = BTreeMap::new();
    for s in specs {
        let mut seen: Vec<&str> = s.keywords().collect();
        seen.sort_unstable();
        seen.dedup();
        for w in seen {
            *owners.entry(w).or_default() += 1;
        }
    }
    let out: Vec<MetadataOut> = specs
        .iter()
        .map(|s| {
            let mut keywords: Vec<KeywordOut> = Vec::new();
            for word in s.keywords() {
                if keywords.iter().any(|k| k.word == word) {
                    continue;
                }
                let tier = match owners[word] {
                    n if n == specs.len() && n > 1 => Tier::TypeMutual,
                    1 => Tier::Unique,
                    _ => Tier::SubclassMutual,
                };
                keywords.push(KeywordOut { word, tier });
            }
            MetadataOut {
                class_id: s.class_id,
                keywords,
            }
        })
        .collect();
    serde_json::to_string_pretty(&out).expect("metadata serializes") + "\n"
}

/// Writes `sources/`, `samples/`, the labels CSV, manifest, keyword metadata and OCR
/// fixtures into `out_dir`. Output bytes depend only on `specs` and `opts`.
pub fn gen_synthetic(specs: &[SyntheticCardSpec], opts: &GenOptions, out_dir: &Path) -> Result<Vec<LabelRow>, SynthError> {
    validate_specs(specs)?;
    for sub in ["sources", "samples"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| PersistError::io(&d, e))?;
    }
    let cards: Vec<RenderedCard> = specs.par_iter().map(render_card).collect();
    let mut fixtures = FixtureProvider::new();
    let mut classes = Vec::new();
    for (spec, card) in specs.iter().zip(&cards) {
        let rel = format!("sources/{}.png", spec.class_id);
        card.image.save_png(&out_dir.join(&rel))?;
        fixtures.insert(&card.image, &ocr_text(&card.words, |_| true));
        classes.push(ClassEntry {
            id: spec.class_id,
            name: spec.name.clone(),
            source: rel,
            crop: None,
        });
    }

    let jobs: Vec<(usize, u32)> = (0..specs.len()).flat_map(|c| (0..opts.samples_per_class).map(move |k| (c, k))).collect();
    let samples: Vec<(LabelRow, RenderedSample)> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let spec = &specs[c];
            let s = render_sample(&cards[c], &spec.jitter, opts.seed, spec.class_id, k);
            let sample_id = format!("c{:03}_s{:03}", spec.class_id.0, k);
            let row = LabelRow {
                path: format!("samples/{sample_id}.png"),
                sample_id,
                class_id: spec.class_id,
            };
            (row, s)
        })
        .collect();

    let mut labels = Vec::with_capacity(samples.len());
    for (row, s) in samples {
        s.image.save_png(&out_dir.join(&row.path))?;
        fixtures.insert(&s.image, &s.text);
        labels.push(row);
    }

    write_labels(&out_dir.join(LABELS_FILE), &labels)?;
    persist::write_atomic(&out_dir.join(METADATA_FILE), metadata_json(specs).as_bytes())?;
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        metadata: METADATA_FILE.into(),
        classes,
    };
    persist::write_json_atomic(&out_dir.join(MANIFEST_FILE), &manifest)?;
    persist::write_json_atomic(&out_dir.join(OCR_FIXTURES_FILE), &fixtures)?;
    Ok(labels)
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| SynthError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| SynthError::Csv(e.to_string()))?;
    persist::write_atomic(path, &bytes)?;
    Ok(())
}

/// Reads `sample_id,path,class_id` rows; paths stay relative to the file's directory.
pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, SynthError> {
    let file = std::fs::File::open(path).map_err(|e| PersistError::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(|e| SynthError::Csv(format!("{}: {e}", path.display()))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textmatch::{keyword_subset_pairs, load_metadata};

    #[test]
    fn default_specs_are_valid() {
        let specs = default_specs(JitterProfile::Clean);
        assert_eq!(specs.len(), 10);
        validate_specs(&specs).unwrap();
        let mut bad = specs.clone();
        bad[1].class_id = bad[0].class_id;
        assert!(validate_specs(&bad).is_err());
        bad = specs;
        bad[0].title_words.push("NO#1".into());
        assert!(validate_specs(&bad).is_err());
    }

    #[test]
    fn layout_seed_fixes_the_layout() {
        let specs = default_specs(JitterProfile::None);
        let a = render_card(&specs[2]);
        let b = render_card(&specs[3]);
        // same layout; only the endorsement line differs
        let differing = a.image.rgb_pixels().zip(b.image.rgb_pixels()).filter(|(p, q)| p != q).count();
        assert!(differing > 0 && differing < 3000, "{differing}");
        assert_eq!(a.image.pixels(), render_card(&specs[2]).image.pixels());
    }

    #[test]
    fn zero_jitter_sample_is_the_source() {
        let spec = &default_specs(JitterProfile::None)[0];
        let card = render_card(spec);
        let s = render_sample(&card, &spec.jitter, 5, spec.class_id, 0);
        assert_eq!(s.image.pixels(), card.image.pixels());
        assert!(s.text.starts_with("NEW SOUTH WALES DRIVER LICENCE NAME"));
    }

    #[test]
    fn banner_spotlight_hides_words() {
        let spec = &default_specs(JitterProfile::None)[4];
        let card = render_card(spec);
        let j = Jitter {
            spotlight_prob: 1.0,
            spotlight_on_banner: true,
            ..Jitter::NONE
        };
        let s = render_sample(&card, &j, 1, spec.class_id, 0);
        assert!(!s.text.contains("VICTORIA"), "{}", s.text);
        assert!(s.text.contains("LICENCE"));
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let specs = default_specs(JitterProfile::Degraded);
        let opts = GenOptions { seed: 9, samples_per_class: 2 };
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let rows = gen_synthetic(&specs, &opts, d1.path()).unwrap();
        gen_synthetic(&specs, &opts, d2.path()).unwrap();
        assert_eq!(rows.len(), 20);
        assert_eq!(read_labels(&d1.path().join(LABELS_FILE)).unwrap(), rows);
        for f in [LABELS_FILE, MANIFEST_FILE, METADATA_FILE, OCR_FIXTURES_FILE, "samples/c004_s001.png"] {
            assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap(), "{f}");
        }
        let fixtures = FixtureProvider::load(&d1.path().join(OCR_FIXTURES_FILE)).unwrap();
        assert_eq!(fixtures.len(), 30);
        let metas = load_metadata(&d1.path().join(METADATA_FILE)).unwrap();
        let pairs = keyword_subset_pairs(&metas);
        assert!(pairs.contains(&(ClassId(3), ClassId(4))));
        assert!(!pairs.iter().any(|p| p.0 == ClassId(1) || p.0 == ClassId(2)));
    }
}
