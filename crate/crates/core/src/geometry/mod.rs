//! Möbius arithmetic and Schottky surfaces.

pub mod mobius;
pub mod schottky;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use mobius::{
    compose, displacement_of_i, hyperbolic_distance, product_with_trace, translation_length,
    translation_length_from_trace, Model, MoebiusMap,
};
pub use schottky::{
    inverse_letter, validate_schottky, Check, Disk, Funnel, Letter, PairedDisks, ReflectionData,
    SchottkySurface, ValidationReport,
};

use crate::error::{Error, Result};

/// Formats a word with `a, b, c, …` for generators and upper case for inverses.
pub fn format_word(word: &[Letter]) -> String {
    word.iter()
        .map(|&l| {
            let base = b'a' + l / 2;
            if l % 2 == 0 {
                base as char
            } else {
                base.to_ascii_uppercase() as char
            }
        })
        .collect()
}

pub fn parse_word(text: &str) -> Result<Vec<Letter>> {
    text.chars()
        .map(|ch| {
            if ch.is_ascii_lowercase() {
                Ok(2 * (ch as u8 - b'a'))
            } else if ch.is_ascii_uppercase() {
                Ok(2 * (ch as u8 - b'A') + 1)
            } else {
                Err(Error::Definition(format!("bad letter {ch:?} in word {text:?}")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub rank: usize,
    pub funnel_lengths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskSpec {
    pub source: Vec<Disk>,
    pub target: Vec<Disk>,
}

/// Contents of a surface definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceFile {
    #[serde(default)]
    pub model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<Recipe>,
    /// Rows `[a, b, c, d]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disks: Option<DiskSpec>,
    /// Boundary words such as `"aB"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub funnel_words: Vec<String>,
}

impl SurfaceFile {
    pub fn parse(text: &str, path_hint: Option<&Path>) -> Result<Self> {
        let is_toml = path_hint
            .and_then(|p| p.extension())
            .map(|e| e.eq_ignore_ascii_case("toml"))
            .unwrap_or_else(|| !text.trim_start().starts_with('{'));
        if is_toml {
            toml::from_str(text).map_err(|e| Error::Definition(format!("TOML: {e}")))
        } else {
            serde_json::from_str(text).map_err(|e| Error::Definition(format!("JSON: {e}")))
        }
    }

    /// Builds the surface (without validating).
    pub fn build(&self) -> Result<SchottkySurface> {
        match (&self.recipe, &self.generators) {
            (Some(r), None) => SchottkySurface::from_recipe(r.rank, &r.funnel_lengths, self.model),
            (None, Some(rows)) => {
                let gens = rows
                    .iter()
                    .map(|m| MoebiusMap::new(m[0], m[1], m[2], m[3]))
                    .collect::<Result<Vec<_>>>()?;
                let disks = self.disks.as_ref().map(|d| PairedDisks {
                    source: d.source.clone(),
                    target: d.target.clone(),
                    model: self.model,
                });
                let words = self
                    .funnel_words
                    .iter()
                    .map(|w| parse_word(w))
                    .collect::<Result<Vec<_>>>()?;
                SchottkySurface::from_generators(gens, disks, words, self.model)
            }
            _ => Err(Error::Definition(
                "surface file needs exactly one of `recipe` or `generators`".into(),
            )),
        }
    }
}

/// Reads, builds and validates a surface definition file.
pub fn load_surface(path: &Path) -> Result<SchottkySurface> {
    let text = std::fs::read_to_string(path)?;
    let file = SurfaceFile::parse(&text, Some(path))?;
    let surface = file.build()?;
    validate_schottky(&surface).into_result()?;
    Ok(surface)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_round_trip() {
        let w = vec![0, 3, 1, 2, 5];
        assert_eq!(format_word(&w), "aBAbC");
        assert_eq!(parse_word("aBAbC").unwrap(), w);
        assert!(parse_word("a1").is_err());
    }

    #[test]
    fn recipe_file_in_both_formats() {
        let t = "model = \"disk\"\n[recipe]\nrank = 2\nfunnel_lengths = [7.0]\n";
        let j = r#"{"model": "disk", "recipe": {"rank": 2, "funnel_lengths": [7.0]}}"#;
        let a = SurfaceFile::parse(t, None).unwrap();
        let b = SurfaceFile::parse(j, None).unwrap();
        assert_eq!(a, b);
        let s = a.build().unwrap();
        assert!(validate_schottky(&s).passed());
        assert_eq!(s.model, Model::Disk);
    }

    #[test]
    fn explicit_generator_file() {
        let g = MoebiusMap::translation_along_unit_circle(3.0);
        let j = format!(
            r#"{{"generators": [[{}, {}, {}, {}]], "funnel_words": ["a"]}}"#,
            g.a, g.b, g.c, g.d
        );
        let s = SurfaceFile::parse(&j, None).unwrap().build().unwrap();
        assert!(validate_schottky(&s).passed());
        assert!((s.funnels[0].length - 3.0).abs() < 1e-10);
    }

    #[test]
    fn ambiguous_file_is_rejected() {
        let j = r#"{"recipe": {"rank": 1, "funnel_lengths": [1.0]}, "generators": [[2.0, 0.0, 0.0, 0.5]]}"#;
        assert!(SurfaceFile::parse(j, None).unwrap().build().is_err());
    }
}
