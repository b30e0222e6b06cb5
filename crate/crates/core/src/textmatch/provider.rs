use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ExtractedText, TextError};
use crate::imaging::Image;
use crate::persist;

pub const DEFAULT_CONCURRENCY: usize = 4;

/// Source of raw OCR text for an image.
pub trait TextProvider: Send + Sync {
    fn id(&self) -> &str;
    fn recognize(&self, img: &Image) -> Result<String, TextError>;
}

pub fn extract_text(img: &Image, provider: &dyn TextProvider) -> Result<ExtractedText, TextError> {
    let raw = provider.recognize(img)?;
    Ok(ExtractedText::from_raw(&raw, provider.id()))
}

/// [`extract_text`] over many images with at most `concurrency` calls in flight. Results
/// keep input order.
pub fn extract_all(
    images: &[&Image],
    provider: &dyn TextProvider,
    concurrency: usize,
) -> Vec<Result<ExtractedText, TextError>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ExtractedText, TextError>>>> =
        images.iter().map(|_| Mutex::new(None)).collect();
    let workers = concurrency.clamp(1, images.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= images.len() {
                    break;
                }
                let r = extract_text(images[i], provider);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

/// Canned text keyed by [`Image::content_hash`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixtureProvider {
    texts: BTreeMap<String, String>,
}

impl FixtureProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, img: &Image, text: &str) {
        self.texts.insert(img.content_hash(), text.to_string());
    }

    pub fn insert_hash(&mut self, hash: &str, text: &str) {
        self.texts.insert(hash.to_string(), text.to_string());
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    /// JSON object mapping content hash to text.
    pub fn load(path: &Path) -> Result<Self, TextError> {
        persist::read_json(path).map_err(|e| TextError::ProviderUnavailable(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), TextError> {
        persist::write_json_atomic(path, self).map_err(|e| TextError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
    }
}

impl TextProvider for FixtureProvider {
    fn id(&self) -> &str {
        "fixture"
    }

    fn recognize(&self, img: &Image) -> Result<String, TextError> {
        let hash = img.content_hash();
        self.texts
            .get(&hash)
            .cloned()
            .ok_or_else(|| TextError::ProviderError(format!("no fixture text for image {hash}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpProviderConfig {
    /// Receives the PNG-encoded image as the POST body and answers with UTF-8 text.
    pub endpoint: String,
    /// Environment variable holding a bearer token, if the service needs one.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        HttpProviderConfig {
            endpoint: String::new(),
            api_key_env: None,
            timeout_secs: 10,
            retries: 1,
        }
    }
}

/// Remote OCR service over plain HTTP.
pub struct HttpProvider {
    config: HttpProviderConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(true)
            .build()
            .into();
        HttpProvider { config, agent }
    }

    fn attempt(&self, body: &[u8]) -> Result<String, TextError> {
        let mut req = self.agent.post(&self.config.endpoint).content_type("image/png");
        if let Some(var) = &self.config.api_key_env {
            let key = std::env::var(var).map_err(|_| {
                TextError::ProviderUnavailable(format!("environment variable {var} is not set"))
            })?;
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        match req.send(body) {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| TextError::ProviderError(e.to_string())),
            Err(ureq::Error::StatusCode(code)) => {
                Err(TextError::ProviderError(format!("HTTP status {code}")))
            }
            Err(e) => Err(TextError::ProviderUnavailable(e.to_string())),
        }
    }
}

impl TextProvider for HttpProvider {
    fn id(&self) -> &str {
        "http"
    }

    fn recognize(&self, img: &Image) -> Result<String, TextError> {
        let body = img
            .to_png_bytes()
            .map_err(|e| TextError::ProviderError(e.to_string()))?;
        let mut tries = 0;
        loop {
            match self.attempt(&body) {
                Err(TextError::ProviderUnavailable(msg)) if tries < self.config.retries => {
                    log::warn!("text provider unavailable ({msg}), retrying");
                    tries += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_lookup_is_deterministic() {
        let a = Image::filled(4, 4, [1, 2, 3]);
        let b = Image::filled(4, 4, [9, 9, 9]);
        let mut p = FixtureProvider::new();
        p.insert(&a, "New South Wales");
        p.insert(&b, "");
        let t1 = extract_text(&a, &p).unwrap();
        assert_eq!(t1, extract_text(&a, &p).unwrap());
        assert_eq!(t1.words, vec!["NEW", "SOUTH", "WALES"]);
        assert_eq!(t1.provider, "fixture");
        assert!(extract_text(&b, &p).unwrap().words.is_empty());
        let c = Image::filled(4, 4, [0, 0, 0]);
        assert!(matches!(extract_text(&c, &p), Err(TextError::ProviderError(_))));
    }

    #[test]
    fn fixture_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = FixtureProvider::new();
        p.insert(&Image::filled(2, 2, [5, 5, 5]), "abc");
        let path = dir.path().join("ocr.json");
        p.save(&path).unwrap();
        assert_eq!(FixtureProvider::load(&path).unwrap(), p);
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        // nothing listens on the discard port of localhost
        let p = HttpProvider::new(HttpProviderConfig {
            endpoint: "http://127.0.0.1:9/ocr".into(),
            timeout_secs: 2,
            ..HttpProviderConfig::default()
        });
        let r = extract_text(&Image::filled(2, 2, [0, 0, 0]), &p);
        assert!(matches!(r, Err(TextError::ProviderUnavailable(_))), "{r:?}");
    }

    #[test]
    fn batch_keeps_order() {
        let imgs: Vec<Image> = (0..9).map(|i| Image::filled(3, 3, [i, 0, 0])).collect();
        let mut p = FixtureProvider::new();
        for (i, img) in imgs.iter().enumerate() {
            p.insert(img, &format!("word{i}"));
        }
        let refs: Vec<&Image> = imgs.iter().collect();
        let out = extract_all(&refs, &p, DEFAULT_CONCURRENCY);
        for (i, r) in out.into_iter().enumerate() {
            assert_eq!(r.unwrap().words, vec![format!("WORD{i}")]);
        }
    }
}
