//! Config-file merging, option parsing helpers, and file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use mcboost::dataset::{Dataset, Schema};
use mcboost::partitions::GroupSpec;
use mcboost::{Error, Result};

/// Fills every option left unset on the command line from `section`.
/// Flags that are `false` count as unset. Unknown keys are rejected by the
/// target type.
pub fn merge<T: Serialize + DeserializeOwned>(args: T, section: Option<&Value>, name: &str) -> Result<T> {
    let Some(section) = section else { return Ok(args) };
    let Value::Object(cfg) = section else {
        return Err(Error::config(name, "config section must be a JSON object"));
    };
    let Value::Object(mut cli) = serde_json::to_value(&args)? else {
        unreachable!("argument structs serialize to objects")
    };
    for (k, v) in cfg {
        match cli.get(k) {
            None | Some(Value::Null) | Some(Value::Bool(false)) => {
                cli.insert(k.clone(), v.clone());
            }
            Some(_) => {}
        }
    }
    serde_json::from_value(Value::Object(cli)).map_err(|e| Error::config(format!("{name} (config file)"), e.to_string()))
}

/// The subcommand's section of a config file: `{"calibrate": {...}}`.
/// Top-level scalars (such as `seed`) apply to every subcommand.
pub fn section(config: &Option<Value>, command: &str) -> Result<Option<Value>> {
    let Some(cfg) = config else { return Ok(None) };
    let Value::Object(top) = cfg else {
        return Err(Error::config("config", "config file must hold a JSON object"));
    };
    let mut out = Map::new();
    for (k, v) in top {
        if !v.is_object() && k == "seed" {
            out.insert(k.clone(), v.clone());
        }
    }
    if let Some(sec) = top.get(command) {
        let Value::Object(sec) = sec else {
            return Err(Error::config(command, "config section must be a JSON object"));
        };
        out.extend(sec.clone());
    }
    Ok(Some(Value::Object(out)))
}

pub fn load_config(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))
}

/// Collects validation problems so they can be reported together.
#[derive(Default)]
pub struct Problems(Vec<String>);

impl Problems {
    pub fn push(&mut self, field: &str, msg: impl std::fmt::Display) {
        self.0.push(format!("{field}: {msg}"));
    }

    pub fn check<T>(&mut self, field: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(Error::Config { field: f, message }) if f != field => {
                self.0.push(format!("{field}: {f}: {message}"));
                None
            }
            Err(Error::Config { message, .. }) => {
                self.push(field, message);
                None
            }
            Err(e) => {
                self.push(field, e);
                None
            }
        }
    }

    pub fn require<T: Clone>(&mut self, field: &str, v: &Option<T>) -> Option<T> {
        if v.is_none() {
            self.push(field, "is required");
        }
        v.clone()
    }

    pub fn finish(self, command: &str) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::config(command, self.0.join("; ")))
        }
    }
}

pub fn parse_groups(s: &Option<String>) -> GroupSpec {
    match s.as_deref().map(str::trim) {
        None | Some("") | Some("none") => GroupSpec::none(),
        Some(list) => GroupSpec::cross(&list.split(',').map(str::trim).collect::<Vec<_>>()),
    }
}

pub fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
    match nums.as_deref() {
        Some(&[a, b]) => Ok((a, b)),
        _ => Err(Error::config("pair", format!("expected `lo,hi`, got `{s}`"))),
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::config("list", format!("bad entry `{p}` in `{s}`"))))
        .collect()
}

pub fn load_data(path: &Path, schema: &Option<String>) -> Result<Dataset> {
    let schema = schema.as_deref().map(Schema::parse).transpose()?;
    Dataset::load_csv(path, schema.as_ref()).map_err(input_error)
}

/// Missing or unreadable inputs are data problems, not internal failures.
pub fn input_error(e: Error) -> Error {
    match e {
        Error::Io { path, source } => Error::data(format!("cannot read {}: {source}", path.display())),
        other => other,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Writes through a sibling temporary file and renames it into place, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::config("out", "output path has no file name"))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp).map_err(io)?);
        fill(&mut f)?;
        f.into_inner().map_err(|e| io(e.into_error()))?.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Writes to `path` atomically, or to stdout when no path is given.
pub fn write_out(path: &Option<PathBuf>, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, fill),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            fill(&mut lock)
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, v)?;
        writeln!(w).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct A {
        alpha: Option<f64>,
        n: Option<usize>,
        share: bool,
    }

    #[test]
    fn flags_win_over_config() {
        let a = A { alpha: Some(0.1), n: None, share: false };
        let cfg = serde_json::json!({"alpha": 0.5, "n": 7, "share": true});
        let m = merge(a, Some(&cfg), "x").unwrap();
        assert_eq!(m, A { alpha: Some(0.1), n: Some(7), share: true });
    }

    #[test]
    fn unknown_config_keys_are_config_errors() {
        let cfg = serde_json::json!({"alpah": 0.5});
        let e = merge(A::default(), Some(&cfg), "x").unwrap_err();
        assert_eq!(e.kind(), mcboost::ErrorKind::Config);
    }

    #[test]
    fn sections_and_top_level_seed() {
        let cfg = Some(serde_json::json!({"seed": 4, "calibrate": {"alpha": 0.2}, "fit": {"n": 1}}));
        let s = section(&cfg, "calibrate").unwrap().unwrap();
        assert_eq!(s, serde_json::json!({"seed": 4, "alpha": 0.2}));
    }

    #[test]
    fn pairs_and_lists() {
        assert_eq!(parse_pair("0, 1").unwrap(), (0.0, 1.0));
        assert!(parse_pair("0").is_err());
        assert_eq!(parse_list::<usize>("500,2000").unwrap(), vec![500, 2000]);
        assert_eq!(parse_groups(&Some("x6, x7".into())), GroupSpec::cross(&["x6", "x7"]));
        assert_eq!(parse_groups(&None), GroupSpec::none());
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, |w| w.write_all(b"one").map_err(|e| Error::Io { path: p.clone(), source: e })).unwrap();
        write_atomic(&p, |w| w.write_all(b"two").map_err(|e| Error::Io { path: p.clone(), source: e })).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
