use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Bm25Params;
use crate::error::{Error, Result};
use crate::filters::{RoundTripMode, SelectionMode};
use crate::gateway::remote::{RemoteClient, RemoteOptions};
use crate::gateway::{
    make_reader_ensemble, AnswerExtractor, ClozeGenerator, ClozeReader, Decomposer, HeuristicExtractor,
    NoisyReader, QuestionGenerator, Reader, ReaderEnsemble,
};
use crate::qed::{Gazetteer, HeuristicDecomposer};
use crate::seed::stable_hash;

/// Where counterfactual contexts come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextStrategy {
    #[default]
    Retrieved,
    Gold,
    Random,
}

impl ContextStrategy {
    /// Selection rule used when the config does not set one.
    pub fn default_selection(self) -> SelectionMode {
        match self {
            ContextStrategy::Gold => SelectionMode::Max,
            ContextStrategy::Retrieved | ContextStrategy::Random => SelectionMode::Min,
        }
    }
}

impl FromStr for ContextStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "retrieved" => Ok(ContextStrategy::Retrieved),
            "gold" => Ok(ContextStrategy::Gold),
            "random" => Ok(ContextStrategy::Random),
            other => Err(format!("unknown strategy `{other}` (expected retrieved|gold|random)")),
        }
    }
}

impl fmt::Display for ContextStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextStrategy::Retrieved => "retrieved",
            ContextStrategy::Gold => "gold",
            ContextStrategy::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    /// Fraction of inputs on which each mock reader abstains.
    pub mock_reader_noise: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator_url: Option<String>,
    /// One URL per ensemble member, or a single URL shared by all members.
    pub reader_urls: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposer_url: Option<String>,
    pub remote: RemoteOptions,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            mode: GatewayMode::Mock,
            mock_reader_noise: 0.0,
            generator_url: None,
            reader_urls: Vec::new(),
            decomposer_url: None,
            remote: RemoteOptions::default(),
        }
    }
}

impl GatewayConfig {
    /// Points every model role at one service.
    pub fn use_single_endpoint(&mut self, url: &str) {
        self.mode = GatewayMode::Remote;
        self.generator_url = Some(url.to_string());
        self.reader_urls = vec![url.to_string()];
        self.decomposer_url = Some(url.to_string());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub retrieval_k: usize,
    pub beams: usize,
    pub overgenerate_target: usize,
    pub ensemble_size: usize,
    pub agreement_threshold: usize,
    /// Falls back to the strategy's default when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionMode>,
    pub context_strategy: ContextStrategy,
    pub round_trip_mode: RoundTripMode,
    /// Answer candidates extracted per context for the gold and random strategies.
    pub answer_candidates: usize,
    pub seed: u64,
    pub bm25: Bm25Params,
    pub gateway: GatewayConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            retrieval_k: 50,
            beams: 15,
            overgenerate_target: 20,
            ensemble_size: 6,
            agreement_threshold: 5,
            selection: None,
            context_strategy: ContextStrategy::Retrieved,
            round_trip_mode: RoundTripMode::Target,
            answer_candidates: 15,
            seed: 0,
            bm25: Bm25Params::default(),
            gateway: GatewayConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn effective_selection(&self) -> SelectionMode {
        self.selection
            .unwrap_or_else(|| self.context_strategy.default_selection())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.retrieval_k < 1 {
            return fail("retrieval_k must be at least 1".into());
        }
        if self.beams < 1 {
            return fail("beams must be at least 1".into());
        }
        if self.overgenerate_target < 1 {
            return fail("overgenerate_target must be at least 1".into());
        }
        if self.answer_candidates < 1 {
            return fail("answer_candidates must be at least 1".into());
        }
        if self.agreement_threshold < 1 || self.agreement_threshold > self.ensemble_size {
            return fail(format!(
                "agreement_threshold {} must be in 1..={} (ensemble_size)",
                self.agreement_threshold, self.ensemble_size
            ));
        }
        if !(self.bm25.k1 >= 0.0) || !(0.0..=1.0).contains(&self.bm25.b) {
            return fail(format!("bm25 parameters out of range: k1={} b={}", self.bm25.k1, self.bm25.b));
        }
        let g = &self.gateway;
        if !(0.0..=1.0).contains(&g.mock_reader_noise) {
            return fail(format!("mock_reader_noise {} outside [0, 1]", g.mock_reader_noise));
        }
        if !(g.remote.timeout_secs > 0.0) {
            return fail("remote.timeout_secs must be positive".into());
        }
        if g.mode == GatewayMode::Remote {
            if g.generator_url.is_none() {
                return fail("remote gateway needs generator_url".into());
            }
            let n = g.reader_urls.len();
            if n != 1 && n != self.ensemble_size {
                return fail(format!(
                    "remote gateway needs 1 or {} reader_urls, got {n}",
                    self.ensemble_size
                ));
            }
        }
        Ok(())
    }
}

/// Model components used by a run.
pub struct Gateway {
    pub generator: Arc<dyn QuestionGenerator>,
    pub ensemble: ReaderEnsemble,
    /// Local span proposer for the gold and random strategies.
    pub extractor: Arc<dyn AnswerExtractor>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("ensemble", &self.ensemble)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn from_config(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let g = &config.gateway;
        let (generator, readers): (Arc<dyn QuestionGenerator>, Vec<Arc<dyn Reader>>) = match g.mode {
            GatewayMode::Mock => (
                Arc::new(ClozeGenerator),
                (0..config.ensemble_size)
                    .map(|i| {
                        let seed = stable_hash(config.seed, &["reader", &i.to_string()]);
                        Arc::new(NoisyReader::new(ClozeReader, seed, g.mock_reader_noise)) as Arc<dyn Reader>
                    })
                    .collect(),
            ),
            GatewayMode::Remote => {
                let url = g.generator_url.as_deref().unwrap_or_default();
                let generator = Arc::new(RemoteClient::new(url, g.remote)?);
                let readers = (0..config.ensemble_size)
                    .map(|i| {
                        let url = &g.reader_urls[i.min(g.reader_urls.len() - 1)];
                        Ok(Arc::new(RemoteClient::new(url.as_str(), g.remote)?) as Arc<dyn Reader>)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (generator, readers)
            }
        };
        Ok(Gateway {
            generator,
            ensemble: make_reader_ensemble(readers, config.agreement_threshold)?,
            extractor: Arc::new(HeuristicExtractor),
        })
    }
}

/// Decomposer for pairing: the remote service when configured, otherwise
/// the heuristic decomposer over `gazetteer`.
pub fn build_decomposer(config: &GatewayConfig, gazetteer: Gazetteer) -> Result<Arc<dyn Decomposer>> {
    match (&config.mode, &config.decomposer_url) {
        (GatewayMode::Remote, Some(url)) => Ok(Arc::new(RemoteClient::new(url.as_str(), config.remote)?)),
        _ => Ok(Arc::new(HeuristicDecomposer::new(gazetteer))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(
            (c.retrieval_k, c.beams, c.overgenerate_target, c.ensemble_size, c.agreement_threshold),
            (50, 15, 20, 6, 5)
        );
        assert_eq!(c.effective_selection(), SelectionMode::Min);
        let gold = PipelineConfig {
            context_strategy: ContextStrategy::Gold,
            ..c.clone()
        };
        assert_eq!(gold.effective_selection(), SelectionMode::Max);
        let forced = PipelineConfig {
            selection: Some(SelectionMode::Min),
            ..gold
        };
        assert_eq!(forced.effective_selection(), SelectionMode::Min);
    }

    #[test]
    fn parses_toml() {
        let c = PipelineConfig::from_toml_str(
            r#"
            seed = 7
            context_strategy = "gold"
            round_trip_mode = "mutual"
            selection = "max"
            [bm25]
            k1 = 0.9
            b = 0.4
            [gateway]
            mock_reader_noise = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.context_strategy, ContextStrategy::Gold);
        assert_eq!(c.round_trip_mode, RoundTripMode::Mutual);
        assert_eq!(c.bm25, Bm25Params { k1: 0.9, b: 0.4 });
        assert_eq!(c.gateway.mock_reader_noise, 0.1);
        let round = toml::to_string(&c).unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&round).unwrap(), c);
    }

    #[test]
    fn rejects_bad_config() {
        for bad in [
            "agreement_threshold = 7",
            "agreement_threshold = 0",
            "beams = 0",
            "retrieval_k = 0",
            "bogus = 1",
            "context_strategy = \"dense\"",
            "[gateway]\nmode = \"remote\"",
            "[gateway]\nmock_reader_noise = 2.0",
        ] {
            let err = PipelineConfig::from_toml_str(bad).unwrap_err();
            assert!(err.is_config(), "{bad}: {err}");
        }
    }

    #[test]
    fn remote_reader_urls_must_cover_ensemble() {
        let mut c = PipelineConfig::default();
        c.gateway.use_single_endpoint("http://127.0.0.1:1");
        assert!(c.validate().is_ok());
        c.gateway.reader_urls = vec!["a".into(), "b".into()];
        assert!(c.validate().is_err());
        c.gateway.reader_urls = vec!["http://127.0.0.1:1".into(); 6];
        let g = Gateway::from_config(&c).unwrap();
        assert_eq!(g.ensemble.size(), 6);
    }
}
