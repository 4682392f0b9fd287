use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::encoding::{Traversal, DEFAULT_TOKEN_LIMIT};
use crate::search::{Strategy, DEFAULT_MAX_NEW};
use crate::task::{SortKey, SortOrder};

/// Everything a pipeline run needs, read from a YAML file. Every key is
/// optional; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub dataset_dir: PathBuf,
    /// Root for every output; the per-stage `output_dir`s are relative to it.
    pub output_dir: PathBuf,
    /// `toy:matrix`, `toy:uniform`, `toy:memorizer` or `ipc:<endpoint>`.
    pub oracle: String,
    pub workers: usize,
    pub sort_tasks_by: SortKey,
    pub sort_tasks_order: SortOrder,
    pub input_tokens_limit: usize,
    pub online_fine_tuning: TttSection,
    pub decoding_strategy: DecodingSection,
    pub filtering: FilteringSection,
    pub scoring: ScoringSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            dataset_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("run"),
            oracle: "toy:matrix".into(),
            workers: 8,
            sort_tasks_by: SortKey::TotalProcessedToken,
            sort_tasks_order: SortOrder::Desc,
            input_tokens_limit: DEFAULT_TOKEN_LIMIT,
            online_fine_tuning: TttSection::default(),
            decoding_strategy: DecodingSection::default(),
            filtering: FilteringSection::default(),
            scoring: ScoringSection::default(),
        }
    }
}

/// Adaptation datasets are written for an external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TttSection {
    pub enabled: bool,
    pub output_dir: PathBuf,
    pub apply_all_rigids: bool,
    pub n_color_permutations: usize,
    pub reorder_demos: bool,
    pub traversals: Vec<Traversal>,
}

impl Default for TttSection {
    fn default() -> Self {
        TttSection {
            enabled: true,
            output_dir: PathBuf::from("online_ft"),
            apply_all_rigids: true,
            n_color_permutations: 0,
            reorder_demos: false,
            traversals: vec![Traversal::RowByRow],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingSection {
    pub output_dir: PathBuf,
    pub n_transforms: usize,
    pub n_attempts: usize,
    pub strategy: Strategy,
    pub max_new_tokens: usize,
    /// Keep color 0 fixed when permuting colors.
    pub fix_background: bool,
}

impl Default for DecodingSection {
    fn default() -> Self {
        DecodingSection {
            output_dir: PathBuf::from("decoding_attempts"),
            n_transforms: 18,
            n_attempts: 2,
            strategy: Strategy::default(),
            max_new_tokens: DEFAULT_MAX_NEW,
            fix_background: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilteringSection {
    pub enabled: bool,
    pub output_dir: PathBuf,
    pub nine_color_exception: bool,
}

impl Default for FilteringSection {
    fn default() -> Self {
        FilteringSection {
            enabled: true,
            output_dir: PathBuf::from("filtered_attempts"),
            nine_color_exception: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMethod {
    /// Occurrence cut, then log-likelihood summed over the rigid views.
    #[default]
    ScoringWithAugmentations,
    /// Occurrence ranking only.
    Occurrence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    pub output_dir: PathBuf,
    pub scoring_method: ScoringMethod,
    pub mini_arch_top_k: usize,
}

impl Default for ScoringSection {
    fn default() -> Self {
        ScoringSection {
            output_dir: PathBuf::from("scored_attempts"),
            scoring_method: ScoringMethod::default(),
            mini_arch_top_k: 80,
        }
    }
}

impl PipelineConfig {
    /// Parses YAML. Unknown keys anywhere in the fixed sections are all
    /// reported together.
    pub fn from_yaml(text: &str) -> Result<Self, PipelineError> {
        let value: serde_yaml::Value =
            serde_yaml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        if !value.is_null() {
            let known = serde_yaml::to_value(PipelineConfig::default()).expect("config serializes");
            let mut unknown = Vec::new();
            unknown_keys(&value, &known, "", &mut unknown);
            if !unknown.is_empty() {
                return Err(PipelineError::UnknownKeys(unknown));
            }
        }
        let cfg: PipelineConfig = if value.is_null() {
            PipelineConfig::default()
        } else {
            serde_yaml::from_value(value).map_err(|e| PipelineError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))?;
        Self::from_yaml(&text)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let d = &self.decoding_strategy;
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if d.n_transforms == 0 {
            return bad("decoding_strategy.n_transforms must be at least 1");
        }
        if d.n_attempts == 0 {
            return bad("decoding_strategy.n_attempts must be at least 1");
        }
        if self.scoring.mini_arch_top_k < d.n_attempts {
            return bad("scoring.mini_arch_top_k must be at least decoding_strategy.n_attempts");
        }
        if self.online_fine_tuning.traversals.is_empty() {
            return bad("online_fine_tuning.traversals must not be empty");
        }
        Ok(())
    }

    pub fn stage_dir(&self, sub: &Path) -> PathBuf {
        self.output_dir.join(sub)
    }
}

/// Keys of `value` that `known` lacks, as dotted paths. The decoding
/// strategy is a tagged union whose keys depend on its type, so serde checks
/// it instead.
fn unknown_keys(value: &serde_yaml::Value, known: &serde_yaml::Value, prefix: &str, out: &mut Vec<String>) {
    let (Some(v), Some(k)) = (value.as_mapping(), known.as_mapping()) else {
        return;
    };
    let names: BTreeSet<String> = k.keys().filter_map(|x| x.as_str().map(String::from)).collect();
    for (key, sub) in v {
        let name = key.as_str().map(String::from).unwrap_or_else(|| format!("{key:?}"));
        let path = if prefix.is_empty() {
            name.clone()
        } else {
            format!("{prefix}.{name}")
        };
        if !names.contains(&name) {
            out.push(path);
        } else if name != "strategy" {
            unknown_keys(sub, &k[key], &path, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_yaml(&c.to_yaml()).unwrap(), c);
        assert_eq!(PipelineConfig::from_yaml("").unwrap(), c);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = PipelineConfig::from_yaml(
            "seed: 7\nworkers: 2\ndecoding_strategy:\n  n_transforms: 4\n  strategy: {type: greedy}\nscoring:\n  scoring_method: occurrence\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.decoding_strategy.n_transforms, 4);
        assert_eq!(c.decoding_strategy.strategy, Strategy::Greedy);
        assert_eq!(c.decoding_strategy.n_attempts, 2);
        assert_eq!(c.scoring.scoring_method, ScoringMethod::Occurrence);
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = PipelineConfig::from_yaml("seeed: 1\nscoring:\n  top_k: 3\n  mini_arch_top_k: 9\n").unwrap_err();
        match err {
            PipelineError::UnknownKeys(k) => assert_eq!(k, vec!["seeed", "scoring.top_k"]),
            e => panic!("{e}"),
        }
        assert!(PipelineConfig::from_yaml("decoding_strategy:\n  strategy: {type: beam, width: 3}\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(PipelineConfig::from_yaml("decoding_strategy:\n  n_attempts: 0\n").is_err());
        assert!(PipelineConfig::from_yaml("scoring:\n  mini_arch_top_k: 1\n").is_err());
        assert!(PipelineConfig::from_yaml("seed: [1, 2]\n").is_err());
    }
}
