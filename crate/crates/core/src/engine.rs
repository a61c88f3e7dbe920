//! End-to-end retrieval: tokenize, decode, score, rank.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{constrained_beam_search, CandidateSet, DecodeConfig};
use crate::error::{Error, Result};
use crate::eval::RunFile;
use crate::fm_index::FmIndex;
use crate::lm::{BuiltinLm, LanguageModel};
use crate::score::{rank_intersective, rank_lm, rank_lm_fm, DocScore, ScoreOptions};
use crate::tokenizer::{Tokenizer, WordTokenizer};
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Lm,
    LmFm,
    #[default]
    Intersective,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Lm, Mode::LmFm, Mode::Intersective];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Lm => "lm",
            Mode::LmFm => "lm_fm",
            Mode::Intersective => "intersective",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lm" => Ok(Mode::Lm),
            "lm_fm" | "lm+fm" => Ok(Mode::LmFm),
            "intersective" => Ok(Mode::Intersective),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode {s:?} (expected lm, lm_fm or intersective)"
            ))),
        }
    }
}

/// Every knob of a retrieval run. Loadable from TOML; missing keys take
/// the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub mode: Mode,
    pub k: usize,
    pub beam: usize,
    pub steps: usize,
    pub constrained: bool,
    pub title_share: f64,
    pub alpha: f64,
    pub beta: f64,
    pub ignore_title_matches: bool,
    /// Order of the builtin ngram model.
    pub lm_order: usize,
    /// Logit boost of query tokens in the builtin model.
    pub query_boost: f64,
    /// Worker threads for batch retrieval; 0 means one per core.
    pub threads: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let decode = DecodeConfig::default();
        let score = ScoreOptions::default();
        RetrievalConfig {
            mode: Mode::default(),
            k: 100,
            beam: decode.beam,
            steps: decode.steps,
            constrained: decode.constrained,
            title_share: decode.title_share,
            alpha: score.alpha,
            beta: score.beta,
            ignore_title_matches: score.ignore_title_matches,
            lm_order: 2,
            query_boost: 2.0,
            threads: 0,
        }
    }
}

impl RetrievalConfig {
    pub fn decode(&self) -> DecodeConfig {
        DecodeConfig {
            beam: self.beam,
            steps: self.steps,
            constrained: self.constrained,
            title_share: self.title_share,
        }
    }

    pub fn score(&self) -> ScoreOptions {
        ScoreOptions {
            alpha: self.alpha,
            beta: self.beta,
            ignore_title_matches: self.ignore_title_matches,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.decode().validate()?;
        self.score().validate()?;
        if self.lm_order == 0 {
            return Err(Error::Config("lm_order must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RetrievalConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Ranks a candidate set under `mode`.
pub fn rank(
    mode: Mode,
    candidates: &CandidateSet,
    ix: &FmIndex,
    options: &ScoreOptions,
) -> Vec<DocScore> {
    match mode {
        Mode::Lm => rank_lm(candidates, ix, options),
        Mode::LmFm => rank_lm_fm(candidates, ix, options),
        Mode::Intersective => rank_intersective(candidates, ix, options),
    }
}

pub struct Engine<L: LanguageModel> {
    index: Arc<FmIndex>,
    lm: L,
    config: RetrievalConfig,
    tokenizer: Arc<dyn Tokenizer>,
}

impl Engine<BuiltinLm> {
    /// An engine whose language model is fitted on the indexed documents.
    pub fn with_builtin(index: impl Into<Arc<FmIndex>>, config: RetrievalConfig) -> Result<Self> {
        let index = index.into();
        let lm = BuiltinLm::fit_index(&index, config.lm_order, config.query_boost)?;
        Engine::new(index, lm, config)
    }
}

impl<L: LanguageModel> Engine<L> {
    pub fn new(index: impl Into<Arc<FmIndex>>, lm: L, config: RetrievalConfig) -> Result<Self> {
        config.validate()?;
        let index = index.into();
        if lm.vocab_size() != index.alphabet_size() {
            return Err(Error::InvalidArgument(format!(
                "language model vocabulary ({}) differs from the index alphabet ({})",
                lm.vocab_size(),
                index.alphabet_size()
            )));
        }
        Ok(Engine {
            index,
            lm,
            config,
            tokenizer: Arc::new(WordTokenizer),
        })
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn index(&self) -> &FmIndex {
        &self.index
    }

    pub fn lm(&self) -> &L {
        &self.lm
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: RetrievalConfig) -> Result<()> {
        config.validate()?;
        self.config = config;
        Ok(())
    }

    /// Token ids of `query`; unknown words map to the `unk` id.
    pub fn encode_query(&self, query: &str) -> Result<Vec<TokenId>> {
        let vocab = self.index.vocabulary();
        let ids: Vec<TokenId> = self
            .tokenizer
            .tokenize(query)
            .iter()
            .map(|t| vocab.id_or_unk(t))
            .collect();
        if ids.is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(ids)
    }

    pub fn candidates(&self, query: &[TokenId]) -> Result<CandidateSet> {
        constrained_beam_search(query, &self.index, &self.lm, &self.config.decode())
    }

    /// Top `k` documents for already tokenized `query`.
    pub fn retrieve_ids(&self, query: &[TokenId], k: usize, mode: Mode) -> Result<Vec<DocScore>> {
        let candidates = self.candidates(query)?;
        let mut ranking = rank(mode, &candidates, &self.index, &self.config.score());
        ranking.truncate(k);
        Ok(ranking)
    }

    pub fn retrieve(&self, query: &str, k: usize, mode: Mode) -> Result<Vec<DocScore>> {
        self.retrieve_ids(&self.encode_query(query)?, k, mode)
    }

    /// Retrieves every `(query_id, text)` with the configured mode and `k`,
    /// in parallel, keeping the input order in the run file.
    pub fn retrieve_batch(&self, queries: &[(String, String)]) -> Result<RunFile> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        let mode = self.config.mode;
        let k = self.config.k;
        let rankings: Vec<Vec<DocScore>> = pool.install(|| {
            queries
                .par_iter()
                .map(|(_, text)| self.retrieve(text, k, mode))
                .collect::<Result<_>>()
        })?;
        let mut run = RunFile::new();
        for ((id, _), ranking) in queries.iter().zip(&rankings) {
            run.push_ranking(id, ranking, mode.as_str());
        }
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_toml() {
        let c = RetrievalConfig::default();
        assert_eq!((c.beam, c.steps, c.alpha, c.beta), (15, 10, 2.0, 0.8));
        assert_eq!(c.mode, Mode::Intersective);
        let parsed = RetrievalConfig::from_toml("beam = 5\nmode = \"lm_fm\"\n").unwrap();
        assert_eq!(parsed.beam, 5);
        assert_eq!(parsed.mode, Mode::LmFm);
        assert_eq!(parsed.steps, 10);
        assert_eq!(RetrievalConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(RetrievalConfig::from_toml("bogus = 1").is_err());
        assert!(RetrievalConfig::from_toml("beam = 0").is_err());
    }

    #[test]
    fn mode_names() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("bm25".parse::<Mode>().is_err());
    }
}
