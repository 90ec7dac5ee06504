//! Parsing of state, inequality and filter specifications given on the
//! command line.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bellbound::bell::{named, AnyInequality, InequalityFile};
use bellbound::nonstandard::FilterPair;
use bellbound::qcore::DensityMatrix;
use bellbound::states::{NamedState, StateFile};
use serde_json::{Map, Value};

/// A state plus warnings raised while building it.
pub struct LoadedState {
    pub rho: DensityMatrix,
    pub flags: Vec<String>,
}

fn is_file_spec(spec: &str) -> Option<&str> {
    if let Some(path) = spec.strip_prefix("file:") {
        return Some(path);
    }
    (spec.ends_with(".json") || Path::new(spec).is_file()).then_some(spec)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {path}"))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {path}"))
}

/// Splits `name:k=v,k=v` into the name and its parameters.
fn split_params(spec: &str) -> Result<(String, Vec<(String, String)>)> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut params = Vec::new();
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| anyhow!("parameter `{item}` is not of the form key=value"))?;
        params.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    Ok((name.trim().to_ascii_lowercase(), params))
}

fn number(key: &str, v: &str) -> Result<Value> {
    let parsed: Value = serde_json::from_str(v).map_err(|_| anyhow!("`{key}={v}` is not a number"))?;
    if !parsed.is_number() {
        bail!("`{key}={v}` is not a number");
    }
    Ok(parsed)
}

/// `werner:d=3,p=0.5`, `pure:c=3/2/1`, `singlet`, or a JSON state file.
pub fn parse_state(spec: &str) -> Result<LoadedState> {
    if let Some(path) = is_file_spec(spec) {
        let file: StateFile = read_json(path)?;
        return Ok(LoadedState { rho: file.to_state()?, flags: Vec::new() });
    }
    let (name, params) = split_params(spec)?;
    let tag = match name.as_str() {
        "me" | "max_entangled" => "max_entangled",
        "cg" | "collins_gisin" => "collins_gisin",
        "pure" | "pure_schmidt" => "pure_schmidt",
        "h3" | "horodecki_h3" => "horodecki_h3",
        "werner" | "isotropic" | "singlet" | "ghz" | "gisin" | "choi_horodecki" | "dur" | "toth_acin" => name.as_str(),
        _ => bail!("unknown state `{name}`"),
    };
    let mut obj = Map::new();
    obj.insert("tag".into(), Value::String(tag.into()));
    for (k, v) in params {
        let (key, value) = match k.as_str() {
            "c" | "coefficients" => {
                let list = v.split('/').map(|x| number(&k, x)).collect::<Result<Vec<_>>>()?;
                ("coefficients".to_string(), Value::Array(list))
            }
            _ => (k.clone(), number(&k, &v)?),
        };
        if obj.insert(key.clone(), value).is_some() {
            bail!("parameter `{key}` given twice");
        }
    }
    if tag == "ghz" {
        obj.entry("alpha").or_insert(Value::from(0.0));
    }
    let named: NamedState =
        serde_json::from_value(Value::Object(obj)).map_err(|e| anyhow!("state `{spec}`: {e}"))?;
    let built = named.build()?;
    Ok(LoadedState { rho: built.rho, flags: built.flags })
}

/// A named inequality (`chsh`, `i3322`, `cglmp:3`, `cglmp(3)`) or a JSON
/// inequality file.
pub fn parse_inequality(spec: &str) -> Result<AnyInequality> {
    if let Some(path) = is_file_spec(spec) {
        let file: InequalityFile = read_json(path)?;
        return Ok(AnyInequality::Probability(file.to_inequality()?));
    }
    let tag = match spec.split_once(':') {
        Some((head, arg)) => {
            let arg = arg.trim_start_matches("n=");
            format!("{head}({arg})")
        }
        None => spec.to_string(),
    };
    Ok(named(&tag)?)
}

/// `identity`, `gisin:theta=0.35` or `project2`, for a state of the given split.
pub fn parse_filter(spec: &str, split: (usize, usize)) -> Result<FilterPair> {
    let (name, params) = split_params(spec)?;
    let get = |key: &str| -> Result<f64> {
        let v = params
            .iter()
            .find(|(k, _)| k == key)
            .ok_or_else(|| anyhow!("filter `{name}` needs `{key}`"))?;
        v.1.parse::<f64>().map_err(|_| anyhow!("`{key}={}` is not a number", v.1))
    };
    Ok(match name.as_str() {
        "identity" => FilterPair::identity(split.0, split.1),
        "gisin" => FilterPair::gisin(get("theta")?)?,
        "project2" => {
            if split.0 != split.1 {
                bail!("project2 needs equal local dimensions, got {split:?}");
            }
            FilterPair::two_dim_projection(split.0)?
        }
        _ => bail!("unknown filter `{name}`"),
    })
}
