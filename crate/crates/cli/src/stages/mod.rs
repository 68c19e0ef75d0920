//! Stage implementations behind the subcommands.

mod active;
mod classify;
mod dtm;
mod filter;
mod ingest;
mod report;
mod sentiment;
mod train;

use std::path::Path;

use anyhow::Context;
use rumorscope_core::corpus::DedupKey;
use rumorscope_core::report::MANIFEST_FILE;
use rumorscope_core::sentiment::{EmotionLexicon, SignedLexicon};
use rumorscope_core::textfeat::{default_stopwords, read_stopwords, DomainList, Stopwords};
use rumorscope_core::theoryfilter::{
    compile_all, parse_theory_configs, CompiledTheory, DEFAULT_THEORIES_TOML,
};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::files::require;
use crate::{out_dir, CliError, Command, DedupArg, GlobalArgs};

/// Copies subcommand flags that shadow configuration keys into `config`.
pub(crate) fn apply_flags(command: &Command, config: &mut RunConfig) {
    match command {
        Command::Ingest(a) => {
            if let Some(lang) = &a.lang {
                config.ingest.lang = lang.clone();
            }
            if let Some(d) = a.dedup {
                config.ingest.dedup = match d {
                    DedupArg::Id => DedupKey::Id,
                    DedupArg::Text => DedupKey::NormalizedText,
                };
            }
        }
        Command::Sample(a) => {
            if let Some(n) = a.n {
                config.sample.n = n;
            }
        }
        Command::Active(a) => {
            if let Some(k) = a.k {
                config.active.k_per_cycle = k;
            }
            if let Some(c) = a.cycles {
                config.active.n_cycles = c;
            }
            if let Some(s) = a.strategy {
                config.active.strategy = s.into();
            }
        }
        Command::Dtm(a) => {
            if let Some(t) = &a.topics {
                config.dtm.topics = t.clone();
            }
        }
        _ => {}
    }
}

pub(crate) fn dispatch(
    command: Command,
    global: &GlobalArgs,
    config: &RunConfig,
) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => ingest::run(&a, &out_dir(global)?, config),
        Command::Filter(a) => filter::run(&a, &out_dir(global)?, config),
        Command::Sample(a) => filter::sample(&a, &out_dir(global)?, config),
        Command::Train(a) => train::run(&a, &out_dir(global)?, config),
        Command::Active(a) => active::run(&a, &out_dir(global)?, config),
        Command::Classify(a) => classify::run(&a, &out_dir(global)?, config),
        Command::Sentiment(a) => sentiment::run(&a, &out_dir(global)?, config),
        Command::Dtm(a) => dtm::run(&a, &out_dir(global)?, config),
        Command::Report(a) => report::run(&a, &out_dir(global)?, config),
        Command::Serve(a) => active::serve(&a),
        Command::Agree(a) => train::agree(&a, global.out.as_deref(), config),
    }
}

/// Identifies an input by file name and content hash, so manifests do not
/// depend on where the inputs live. Directories are identified by their
/// manifest.
pub(crate) fn input_ref(path: &Path) -> Result<Value, CliError> {
    require(path)?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_owned()
    };
    if !file.is_file() {
        return Ok(json!({ "dir": name }));
    }
    let bytes = std::fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
    let key = if path.is_dir() { "dir" } else { "file" };
    Ok(json!({ key: name, "sha256": hex::encode(Sha256::digest(&bytes)) }))
}

pub(crate) fn optional_ref(path: Option<&Path>) -> Result<Value, CliError> {
    path.map_or(Ok(Value::Null), input_ref)
}

pub(crate) fn stopwords(config: &RunConfig) -> Result<Stopwords, CliError> {
    match &config.paths.stopwords {
        None => Ok(default_stopwords()),
        Some(p) => {
            require(p)?;
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(read_stopwords(std::io::BufReader::new(f))
                .with_context(|| format!("reading {}", p.display()))?)
        }
    }
}

/// Flagged domains from the flag, then the config, else none.
pub(crate) fn domains(flag: Option<&Path>, config: &RunConfig) -> Result<DomainList, CliError> {
    match flag.or(config.paths.domains.as_deref()) {
        None => Ok(DomainList::default()),
        Some(p) => {
            require(p)?;
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(DomainList::read_csv(f).with_context(|| format!("reading {}", p.display()))?)
        }
    }
}

pub(crate) fn theories(
    flag: Option<&Path>,
    config: &RunConfig,
) -> Result<Vec<CompiledTheory>, CliError> {
    let text = match flag.or(config.paths.theories.as_deref()) {
        None => DEFAULT_THEORIES_TOML.to_owned(),
        Some(p) => {
            require(p)?;
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
        }
    };
    let configs = parse_theory_configs(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    let compiled = compile_all(&configs).map_err(|e| CliError::Usage(e.to_string()))?;
    for t in &compiled {
        check_name(t.name())?;
    }
    Ok(compiled)
}

pub(crate) fn lexicons(config: &RunConfig) -> Result<(SignedLexicon, EmotionLexicon), CliError> {
    let signed = match &config.paths.signed_lexicon {
        None => SignedLexicon::bundled(),
        Some(p) => {
            require(p)?;
            SignedLexicon::from_path(p).map_err(anyhow::Error::from)?
        }
    };
    let emotions = match &config.paths.emotion_lexicon {
        None => EmotionLexicon::bundled(),
        Some(p) => {
            require(p)?;
            EmotionLexicon::from_path(p).map_err(anyhow::Error::from)?
        }
    };
    Ok((signed, emotions))
}

/// Theory and run names end up in file names.
pub(crate) fn check_name(name: &str) -> Result<(), CliError> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "name {name:?} may only use letters, digits, '_', '-' and '.'"
        )))
    }
}
