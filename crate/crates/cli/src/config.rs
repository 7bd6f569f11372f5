//! Config-file handling: a JSON or TOML file mirroring the tracker and
//! triangulation settings. Command-line flags override file values;
//! unknown keys are rejected.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use strec_core::tracking::TrackerConfig;
use strec_core::triangulation::TriangulationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub tracker: TrackerConfig,
    pub triangulation: TriangulationConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let is_toml = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let cfg = if is_toml {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            strec_core::io::from_json_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_parameters() {
        let cfg = FileConfig::default();
        assert_eq!(cfg.tracker.track_high_thresh, 0.1);
        assert_eq!(cfg.tracker.track_low_thresh, -0.5);
        assert_eq!(cfg.tracker.match_score_thresh, 0.9);
        assert_eq!(cfg.tracker.match_giou_thresh, 0.9);
    }

    #[test]
    fn partial_toml_keeps_defaults_elsewhere() {
        let cfg: FileConfig = toml::from_str(
            "[tracker]\nmax_lost_frames = 5\n\n[triangulation]\nmin_inlier_rays = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.tracker.max_lost_frames, 5);
        assert_eq!(cfg.tracker.track_high_thresh, 0.1);
        assert_eq!(cfg.triangulation.min_inlier_rays, 4);
        assert_eq!(cfg.triangulation.outlier_mad_factor, 3.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("[tracker]\nbogus = 1\n").is_err());
        assert!(toml::from_str::<FileConfig>("[mystery]\n").is_err());
    }
}
