//! Strict TOML session configs and seed overrides.

use std::fs;
use std::path::Path;

use synforge_core::pipeline::SessionConfig;

use crate::CliError;

pub const SEED_ENV: &str = "SYNFORGE_SEED";

/// Reads a config; unknown keys are errors, and parse errors carry the
/// line and column of the offending input.
pub fn load(path: &Path) -> Result<SessionConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|msg| CliError::usage(format!("{}: {msg}", path.display())))
}

pub fn parse(text: &str) -> Result<SessionConfig, String> {
    let cfg: SessionConfig = toml::from_str(text).map_err(|e| e.to_string().trim_end().to_owned())?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// `--seed` wins over `SYNFORGE_SEED`, which wins over the file.
pub fn resolve_seed(cfg: &mut SessionConfig, flag: Option<u64>) -> Result<(), CliError> {
    if let Some(seed) = flag {
        cfg.seed = seed;
        return Ok(());
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Err(std::env::VarError::NotPresent) => {}
        Err(e) => return Err(CliError::usage(format!("{SEED_ENV}: {e}"))),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use synforge_core::pipeline::ChannelSpec;

    const BASIC: &str = r#"
signals = 20000
test_sample = 2000
seed = 4

[channel]
kind = "qber"
qber = 0.03
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = parse(BASIC).unwrap();
        assert_eq!(cfg.channel, ChannelSpec::Qber { qber: 0.03 });
        assert_eq!(cfg.cascade.passes, 4);
        assert_eq!(cfg.max_p_x, 0.11);
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let text = BASIC.replace("seed = 4", "seed = 4\nsignal = 5");
        let err = parse(&text).unwrap_err();
        assert!(err.contains("line 5"), "{err}");
        assert!(err.contains("signal"), "{err}");
        let text = BASIC.replace("qber = 0.03", "qber = 0.03\nextra = 1");
        assert!(parse(&text).is_err());
        let text = format!("{BASIC}\n[cascade]\npasses = 4\nbogus = 1\n");
        assert!(parse(&text).unwrap_err().contains("bogus"));
    }

    #[test]
    fn invalid_values_rejected() {
        let text = BASIC.replace("test_sample = 2000", "test_sample = 10000");
        assert!(parse(&text).unwrap_err().contains("test_sample"));
    }
}
