use super::{FuzzyError, MamdaniSystem};
use crate::imaging::{rgb_to_hsv, HsvPixel};
use crate::legacy::{ColorNamer, LegacyError};
use crate::scalar::Scalar;

/// Shipped colour-naming rule base: 9 hue, 3 saturation and 5 value terms, 54 rules and
/// 15 output colours.
pub const DEFAULT_COLOR_RULES: &str = include_str!("../../data/color_rules.json");

/// Names HSV colours with a three-input Mamdani system.
#[derive(Debug, Clone)]
pub struct ColorDetector<T> {
    system: MamdaniSystem<T>,
}

impl<T: Scalar> ColorDetector<T> {
    pub fn new(system: MamdaniSystem<T>) -> Result<Self, FuzzyError> {
        if system.inputs().len() != 3 {
            return Err(FuzzyError::Schema(
                "colour detector needs hue, saturation and value inputs".into(),
            ));
        }
        Ok(ColorDetector { system })
    }

    pub fn system(&self) -> &MamdaniSystem<T> {
        &self.system
    }

    pub fn color_names(&self) -> Vec<&str> {
        self.system.output().terms.iter().map(|t| t.name.as_str()).collect()
    }

    /// Index of the output colour for an HSV pixel (`h` in degrees, `s`, `v` in percent).
    pub fn detect_index(&self, hsv: HsvPixel<T>) -> Result<usize, FuzzyError> {
        let x = [
            hsv.hue / T::lit(360.0),
            hsv.saturation / T::lit(100.0),
            hsv.value / T::lit(100.0),
        ];
        match self.system.infer(&x) {
            Ok(y) => Ok(self.system.nearest_output_term(y)),
            Err(FuzzyError::NoRuleFired) => Err(FuzzyError::UnknownColor),
            Err(e) => Err(e),
        }
    }

    pub fn detect_color(&self, hsv: HsvPixel<T>) -> Result<&str, FuzzyError> {
        let i = self.detect_index(hsv)?;
        Ok(&self.system.output().terms[i].name)
    }
}

impl<T: Scalar> Default for ColorDetector<T> {
    fn default() -> Self {
        let system = MamdaniSystem::from_json(DEFAULT_COLOR_RULES).expect("shipped rule base is valid");
        ColorDetector { system }
    }
}

impl<T: Scalar> ColorNamer for ColorDetector<T> {
    fn names(&self) -> Vec<String> {
        self.color_names().into_iter().map(String::from).collect()
    }

    fn name_index(&self, rgb: [u8; 3]) -> Result<usize, LegacyError> {
        self.detect_index(rgb_to_hsv(rgb[0], rgb[1], rgb[2]))
            .map_err(|_| LegacyError::UnknownColor(rgb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hsv(h: f64, s: f64, v: f64) -> HsvPixel<f64> {
        HsvPixel {
            hue: h,
            saturation: s,
            value: v,
        }
    }

    #[test]
    fn shipped_rule_base_shape() {
        let d = ColorDetector::<f64>::default();
        assert_eq!(d.system().rules().len(), 54);
        assert_eq!(d.color_names().len(), 15);
        for i in 0..15 {
            assert!(d.system().rules().iter().any(|r| r.consequent == i));
        }
    }

    #[test]
    fn anchors() {
        let d = ColorDetector::<f64>::default();
        assert_eq!(d.detect_color(hsv(0.0, 100.0, 100.0)).unwrap(), "red");
        assert_eq!(d.detect_color(hsv(0.0, 0.0, 0.0)).unwrap(), "black");
        assert_eq!(d.detect_color(hsv(0.0, 0.0, 100.0)).unwrap(), "white");
        assert_eq!(d.detect_color(hsv(240.0, 100.0, 100.0)).unwrap(), "blue");
        assert_eq!(d.detect_color(hsv(120.0, 100.0, 60.0)).unwrap(), "green");
        assert_eq!(d.detect_color(hsv(60.0, 100.0, 100.0)).unwrap(), "yellow");
        assert_eq!(d.detect_color(hsv(0.0, 0.0, 50.0)).unwrap(), "gray");
    }

    #[test]
    fn rgb_naming_via_trait() {
        let d = ColorDetector::<f64>::default();
        let names = d.names();
        let name = |rgb| names[d.name_index(rgb).unwrap()].as_str();
        assert_eq!(name([255, 0, 0]), "red");
        assert_eq!(name([0, 0, 80]), "navy");
        assert_eq!(name([255, 255, 255]), "white");
    }
}
