use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LegacyError;
use crate::imaging::Image;

/// Maps an RGB pixel to the index of a colour name.
pub trait ColorNamer: Sync {
    fn names(&self) -> Vec<String>;
    fn name_index(&self, rgb: [u8; 3]) -> Result<usize, LegacyError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorCentroid {
    pub name: String,
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

/// Named RGB anchors; a pixel takes the name of its nearest anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ColorCentroid>", into = "Vec<ColorCentroid>")]
pub struct ColorCentroids(Vec<ColorCentroid>);

const DEFAULT_CENTROIDS: [(&str, [u8; 3]); 11] = [
    ("black", [0, 0, 0]),
    ("white", [255, 255, 255]),
    ("blue", [0, 0, 255]),
    ("yellow", [255, 255, 0]),
    ("brown", [139, 69, 19]),
    ("gray", [128, 128, 128]),
    ("orange", [255, 165, 0]),
    ("green", [0, 128, 0]),
    ("pink", [255, 192, 203]),
    ("red", [255, 0, 0]),
    ("purple", [128, 0, 128]),
];

impl Default for ColorCentroids {
    fn default() -> Self {
        ColorCentroids(
            DEFAULT_CENTROIDS
                .iter()
                .map(|&(name, [r, g, b])| ColorCentroid {
                    name: name.to_string(),
                    r,
                    g,
                    b,
                })
                .collect(),
        )
    }
}

impl TryFrom<Vec<ColorCentroid>> for ColorCentroids {
    type Error = String;

    fn try_from(v: Vec<ColorCentroid>) -> Result<Self, Self::Error> {
        if v.is_empty() {
            return Err("centroid table is empty".into());
        }
        for (i, c) in v.iter().enumerate() {
            if v[..i].iter().any(|o| o.name == c.name) {
                return Err(format!("duplicate centroid name {:?}", c.name));
            }
        }
        Ok(ColorCentroids(v))
    }
}

impl From<ColorCentroids> for Vec<ColorCentroid> {
    fn from(c: ColorCentroids) -> Self {
        c.0
    }
}

impl ColorCentroids {
    pub fn new(v: Vec<ColorCentroid>) -> Result<Self, LegacyError> {
        Self::try_from(v).map_err(LegacyError::Config)
    }

    pub fn entries(&self) -> &[ColorCentroid] {
        &self.0
    }

    /// Load a `.json` array of `{name, r, g, b}` or a `.csv` with a `name,r,g,b` header.
    pub fn load(path: &Path) -> Result<Self, LegacyError> {
        let text = std::fs::read_to_string(path).map_err(|e| LegacyError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let rows: Vec<ColorCentroid> = if is_csv {
            csv::Reader::from_reader(text.as_bytes())
                .deserialize()
                .collect::<Result<_, _>>()
                .map_err(|e| LegacyError::Config(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| LegacyError::Config(e.to_string()))?
        };
        Self::new(rows)
    }

    /// Nearest anchor by squared RGB distance; the earlier entry wins ties.
    pub fn nearest(&self, rgb: [u8; 3]) -> usize {
        let mut best = 0;
        let mut best_d = u32::MAX;
        for (i, c) in self.0.iter().enumerate() {
            let d = [(rgb[0], c.r), (rgb[1], c.g), (rgb[2], c.b)]
                .iter()
                .map(|&(a, b)| (a as i32 - b as i32).pow(2) as u32)
                .sum::<u32>();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

impl ColorNamer for ColorCentroids {
    fn names(&self) -> Vec<String> {
        self.0.iter().map(|c| c.name.clone()).collect()
    }

    fn name_index(&self, rgb: [u8; 3]) -> Result<usize, LegacyError> {
        Ok(self.nearest(rgb))
    }
}

pub fn color_name_centroid(rgb: [u8; 3], centroids: &ColorCentroids) -> &str {
    &centroids.0[centroids.nearest(rgb)].name
}

/// Fraction of pixels per colour name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorHistogram {
    pub values: Vec<f64>,
}

/// Per-pixel colour indices, computing each distinct colour once.
fn name_pixels(img: &Image, namer: &dyn ColorNamer) -> Result<Vec<usize>, LegacyError> {
    let mut cache: HashMap<[u8; 3], usize> = HashMap::new();
    let mut out = Vec::with_capacity((img.width() * img.height()) as usize);
    for px in img.rgb_pixels() {
        let idx = match cache.get(&px) {
            Some(&i) => i,
            None => {
                let i = namer.name_index(px)?;
                cache.insert(px, i);
                i
            }
        };
        out.push(idx);
    }
    Ok(out)
}

fn histogram_of(indices: impl Iterator<Item = usize>, bins: usize) -> ColorHistogram {
    let mut counts = vec![0u64; bins];
    let mut total = 0u64;
    for i in indices {
        counts[i] += 1;
        total += 1;
    }
    ColorHistogram {
        values: counts
            .into_iter()
            .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect(),
    }
}

pub fn color_histogram(img: &Image, namer: &dyn ColorNamer) -> Result<ColorHistogram, LegacyError> {
    let bins = namer.names().len();
    Ok(histogram_of(name_pixels(img, namer)?.into_iter(), bins))
}

/// Whole image, 2x2 quadrants, then each quadrant split 2x2 again: 21 histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sp3Vector {
    pub cells: Vec<ColorHistogram>,
}

pub const SP3_CELLS: usize = 21;

impl Sp3Vector {
    pub fn flatten(&self) -> Vec<f64> {
        self.cells.iter().flat_map(|c| c.values.iter().copied()).collect()
    }
}

/// Split `[start, start + len)` in two; the first part takes the extra pixel.
fn halves(start: usize, len: usize) -> [(usize, usize); 2] {
    let first = len.div_ceil(2);
    [(start, first), (start + first, len - first)]
}

/// Rectangles `(x, y, w, h)` of the 21 regions, in output order.
pub fn sp3_regions(width: usize, height: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut out = vec![(0, 0, width, height)];
    let xs = halves(0, width);
    let ys = halves(0, height);
    for &(y, h) in &ys {
        for &(x, w) in &xs {
            out.push((x, y, w, h));
        }
    }
    // 4x4 level: column and row bands obtained by halving each quadrant band
    let cols: Vec<_> = xs.iter().flat_map(|&(x, w)| halves(x, w)).collect();
    let rows: Vec<_> = ys.iter().flat_map(|&(y, h)| halves(y, h)).collect();
    for &(y, h) in &rows {
        for &(x, w) in &cols {
            out.push((x, y, w, h));
        }
    }
    out
}

pub fn sp3(img: &Image, namer: &dyn ColorNamer) -> Result<Sp3Vector, LegacyError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < 4 || h < 4 {
        return Err(LegacyError::ImageTooSmall {
            width: w as u32,
            height: h as u32,
        });
    }
    let bins = namer.names().len();
    let idx = name_pixels(img, namer)?;
    let cells = sp3_regions(w, h)
        .into_iter()
        .map(|(x0, y0, rw, rh)| {
            histogram_of(
                (y0..y0 + rh).flat_map(|y| idx[y * w + x0..y * w + x0 + rw].iter().copied()),
                bins,
            )
        })
        .collect();
    Ok(Sp3Vector { cells })
}
