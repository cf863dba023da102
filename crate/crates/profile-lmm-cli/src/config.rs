//! Strict flat key-value configuration: `key = value` lines under
//! `[model]`, `[priors]`, and `[run]` sections, `#` comments, unknown keys
//! rejected with their line numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use profile_lmm::engine::RunConfig;
use profile_lmm::model::{Hyperparameters, ModelSpec, SplineSpec};
use profile_lmm::stochastics::PsdMatrix;
use profile_lmm::Error;

/// Post-processing settings carried in `[run]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PostConfig {
    pub similarity_subset: usize,
    /// Fixed cluster count; 0 selects by silhouette.
    pub k: usize,
    pub k_max: usize,
    pub credible_level: f64,
    pub contrast_level: f64,
    /// 1-based reference cluster for contrasts.
    pub reference_cluster: usize,
    pub min_cluster_frac: f64,
}

impl Default for PostConfig {
    fn default() -> Self {
        Self {
            similarity_subset: 10_000,
            k: 0,
            k_max: 30,
            credible_level: 0.95,
            contrast_level: 0.90,
            reference_cluster: 1,
            min_cluster_frac: 0.01,
        }
    }
}

/// Fully resolved configuration: column roles, model spec, priors, and run
/// settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedConfig {
    pub x_names: Vec<String>,
    pub u_cont_names: Vec<String>,
    pub u_cat_names: Vec<String>,
    pub spec: ModelSpec,
    pub hyper: Hyperparameters,
    pub run: RunConfig,
    pub post: PostConfig,
    /// Design tokens, kept for the effective-config emitter.
    fe_tokens: Vec<String>,
    re_tokens: Vec<String>,
    int_tokens: Vec<String>,
}

struct RawValue {
    value: String,
    line: usize,
}

type Section = BTreeMap<String, RawValue>;

fn parse_sections(text: &str) -> Result<BTreeMap<String, Section>, Error> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Spec(format!("line {line_no}: malformed section header")))?
                .trim()
                .to_string();
            if !matches!(name.as_str(), "model" | "priors" | "run") {
                return Err(Error::Spec(format!(
                    "line {line_no}: unknown section [{name}]"
                )));
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Spec(format!(
                "line {line_no}: expected `key = value`, got `{line}`"
            )));
        };
        let section = current.as_ref().ok_or_else(|| {
            Error::Spec(format!(
                "line {line_no}: key `{}` appears before any section",
                key.trim()
            ))
        })?;
        let key = key.trim().to_string();
        let entry = sections.get_mut(section).expect("section exists");
        if entry.contains_key(&key) {
            return Err(Error::Spec(format!(
                "line {line_no}: duplicate key `{key}` in section [{section}]"
            )));
        }
        entry.insert(
            key,
            RawValue {
                value: value.trim().to_string(),
                line: line_no,
            },
        );
    }
    Ok(sections)
}

struct SectionReader {
    name: &'static str,
    entries: Section,
}

impl SectionReader {
    fn take(&mut self, key: &str) -> Option<RawValue> {
        self.entries.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, Error> {
        match self.take(key) {
            Some(raw) => raw.value.parse::<T>().map_err(|_| {
                Error::Spec(format!(
                    "line {}: key `{key}` has invalid value `{}`",
                    raw.line, raw.value
                ))
            }),
            None => Ok(default),
        }
    }

    /// Numeric value or the literal `auto`.
    fn parse_auto(&mut self, key: &str) -> Result<Option<(f64, usize)>, Error> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) if raw.value == "auto" => Ok(None),
            Some(raw) => {
                let v = raw.value.parse::<f64>().map_err(|_| {
                    Error::Spec(format!(
                        "line {}: key `{key}` has invalid value `{}` (number or `auto`)",
                        raw.line, raw.value
                    ))
                })?;
                Ok(Some((v, raw.line)))
            }
        }
    }

    fn name_list(&mut self, key: &str) -> Option<Vec<String>> {
        self.take(key).map(|raw| {
            raw.value
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    fn finish(self) -> Result<(), Error> {
        if let Some((key, raw)) = self.entries.into_iter().next() {
            return Err(Error::Spec(format!(
                "line {}: unknown key `{key}` in section [{}]",
                raw.line, self.name
            )));
        }
        Ok(())
    }
}

/// Map fe/int design tokens (`intercept` or an x column name) to extended
/// design indices.
fn resolve_tokens(tokens: &[String], x_names: &[String], role: &str) -> Result<Vec<usize>, Error> {
    tokens
        .iter()
        .map(|t| {
            if t == "intercept" {
                return Ok(0);
            }
            x_names
                .iter()
                .position(|n| n == t)
                .map(|p| p + 1)
                .ok_or_else(|| {
                    Error::Spec(format!(
                        "{role} references `{t}`, which is not a declared x column"
                    ))
                })
        })
        .collect()
}

fn parse_spline_token(token: &str) -> Result<SplineSpec, Error> {
    let parts: Vec<&str> = token.split(':').collect();
    if parts.len() != 3 && parts.len() != 5 {
        return Err(Error::Spec(format!(
            "re spline must be spline:<n_basis>:<degree>[:<lo>:<hi>], got `{token}`"
        )));
    }
    let n_basis: usize = parts[1]
        .parse()
        .map_err(|_| Error::Spec(format!("invalid spline n_basis in `{token}`")))?;
    let degree: usize = parts[2]
        .parse()
        .map_err(|_| Error::Spec(format!("invalid spline degree in `{token}`")))?;
    let domain = if parts.len() == 5 {
        let lo: f64 = parts[3]
            .parse()
            .map_err(|_| Error::Spec(format!("invalid spline domain in `{token}`")))?;
        let hi: f64 = parts[4]
            .parse()
            .map_err(|_| Error::Spec(format!("invalid spline domain in `{token}`")))?;
        Some((lo, hi))
    } else {
        None
    };
    Ok(SplineSpec {
        n_basis,
        degree,
        domain,
    })
}

/// Parse a configuration file into the model spec, priors, run settings,
/// and post-processing settings, applying documented defaults for every
/// omitted key.
pub fn parse_config(path: &Path) -> Result<ParsedConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ParsedConfig, Error> {
    let mut sections = parse_sections(text)?;
    let mut model = SectionReader {
        name: "model",
        entries: sections.remove("model").unwrap_or_default(),
    };
    let mut priors = SectionReader {
        name: "priors",
        entries: sections.remove("priors").unwrap_or_default(),
    };
    let mut run = SectionReader {
        name: "run",
        entries: sections.remove("run").unwrap_or_default(),
    };

    // [model]
    let x_names = model.name_list("x").unwrap_or_default();
    let u_cont_names = model.name_list("u_cont").unwrap_or_default();
    let u_cat_names = model.name_list("u_cat").unwrap_or_default();
    if u_cont_names.is_empty() && u_cat_names.is_empty() {
        return Err(Error::Spec(
            "at least one clustering covariate (u_cont or u_cat) is required".into(),
        ));
    }
    let mut fe_tokens = vec!["intercept".to_string()];
    fe_tokens.extend(x_names.iter().cloned());
    let fe_tokens = model.name_list("fe").unwrap_or(fe_tokens);
    let int_tokens = model
        .name_list("int")
        .unwrap_or_else(|| vec!["intercept".to_string()]);
    let re_tokens = model
        .name_list("re")
        .unwrap_or_else(|| vec!["intercept".to_string()]);
    let c_raw = model.take("C");
    let c_max = match &c_raw {
        Some(raw) => raw.value.parse::<usize>().map_err(|_| {
            Error::Spec(format!(
                "line {}: key `C` has invalid value `{}`",
                raw.line, raw.value
            ))
        })?,
        None => 60,
    };
    let standardize = model.parse("standardize", true)?;
    model.finish()?;

    let p_x = 1 + x_names.len();
    let fe_cols = resolve_tokens(&fe_tokens, &x_names, "fe")?;
    let int_cols = resolve_tokens(&int_tokens, &x_names, "int")?;
    let (re_cols, time_spline) = if re_tokens.len() == 1 && re_tokens[0].starts_with("spline:") {
        let spline = parse_spline_token(&re_tokens[0])?;
        ((p_x..p_x + spline.n_basis).collect(), Some(spline))
    } else {
        (resolve_tokens(&re_tokens, &x_names, "re")?, None)
    };
    let spec = ModelSpec {
        fe_cols,
        re_cols,
        int_cols,
        c_max,
        standardize,
        time_spline,
    };
    spec.validate(p_x).map_err(|e| match (&c_raw, &e) {
        (Some(raw), Error::Spec(msg)) if msg.contains("truncation") => {
            Error::Spec(format!("line {}: {msg}", raw.line))
        }
        _ => e,
    })?;

    // [priors]
    let p_re = spec.re_cols.len();
    let p_int = spec.int_cols.len();
    let q_cont = u_cont_names.len();
    let base = Hyperparameters::default_for(p_re, p_int, q_cont);
    // Auto scale targets a prior mean of the identity: s = dof - dim - 1
    // when that is positive, else 1.
    let scale_matrix = |dim: usize,
                        scale: Option<(f64, usize)>,
                        dof: f64,
                        key: &str|
     -> Result<PsdMatrix, Error> {
        match scale {
            Some((s, line)) => PsdMatrix::scaled_identity(dim, s)
                .map_err(|_| Error::Spec(format!("line {line}: `{key}` must be positive"))),
            None => {
                let s = if dof > dim as f64 + 1.0 {
                    dof - dim as f64 - 1.0
                } else {
                    1.0
                };
                Ok(PsdMatrix::scaled_identity(dim, s).expect("default scale is PD"))
            }
        }
    };
    let re_dof = priors
        .parse_auto("re_dof")?
        .map_or(base.re_cov_dof, |(v, _)| v);
    let re_scale = scale_matrix(p_re, priors.parse_auto("re_scale")?, re_dof, "re_scale")?;
    let int_dof = priors
        .parse_auto("int_dof")?
        .map_or(base.int_cov_dof, |(v, _)| v);
    let int_scale = scale_matrix(p_int, priors.parse_auto("int_scale")?, int_dof, "int_scale")?;
    let assign_dof = priors
        .parse_auto("assign_dof")?
        .map_or(base.assign_dof, |(v, _)| v);
    let assign_scale = scale_matrix(
        q_cont.max(1),
        priors.parse_auto("assign_scale")?,
        assign_dof,
        "assign_scale",
    )?;
    let hyper = Hyperparameters {
        ridge_precision: priors.parse("ridge", base.ridge_precision)?,
        noise_shape: priors.parse("noise_shape", base.noise_shape)?,
        noise_rate: priors.parse("noise_rate", base.noise_rate)?,
        re_cov_scale: re_scale,
        re_cov_dof: re_dof,
        int_cov_scale: int_scale,
        int_cov_dof: int_dof,
        assign_shrinkage: priors.parse("assign_shrinkage", base.assign_shrinkage)?,
        assign_dof,
        assign_scale,
        cat_concentration: priors.parse("cat_alpha", base.cat_concentration)?,
        dp_shape: priors.parse("dp_shape", base.dp_shape)?,
        dp_scale: priors.parse("dp_scale", base.dp_scale)?,
    };
    priors.finish()?;
    hyper.validate(p_re, p_int, q_cont)?;

    // [run]
    let run_defaults = RunConfig::default();
    let runcfg = RunConfig {
        iterations: run.parse("iterations", run_defaults.iterations)?,
        burn_in: run.parse("burn_in", run_defaults.burn_in)?,
        thin: run.parse("thin", run_defaults.thin)?,
        seed: run.parse("seed", run_defaults.seed)?,
        n_chains: run.parse("n_chains", run_defaults.n_chains)?,
        record_loglik: run.parse("record_loglik", run_defaults.record_loglik)?,
    };
    runcfg.validate()?;
    let post_defaults = PostConfig::default();
    let post = PostConfig {
        similarity_subset: run.parse("similarity_subset", post_defaults.similarity_subset)?,
        k: run.parse("k", post_defaults.k)?,
        k_max: run.parse("k_max", post_defaults.k_max)?,
        credible_level: run.parse("credible_level", post_defaults.credible_level)?,
        contrast_level: run.parse("contrast_level", post_defaults.contrast_level)?,
        reference_cluster: run.parse("reference_cluster", post_defaults.reference_cluster)?,
        min_cluster_frac: run.parse("min_cluster_frac", post_defaults.min_cluster_frac)?,
    };
    run.finish()?;
    for (level, key) in [
        (post.credible_level, "credible_level"),
        (post.contrast_level, "contrast_level"),
    ] {
        if !(0.0..1.0).contains(&level) {
            return Err(Error::Spec(format!("`{key}` must lie in [0, 1)")));
        }
    }

    Ok(ParsedConfig {
        x_names,
        u_cont_names,
        u_cat_names,
        spec,
        hyper,
        run: runcfg,
        post,
        fe_tokens,
        re_tokens,
        int_tokens,
    })
}

fn scale_value(m: &PsdMatrix) -> f64 {
    if m.dim() == 0 {
        1.0
    } else {
        m.matrix()[(0, 0)]
    }
}

/// Emit the configuration with every effective value explicit; re-parsing
/// the output reproduces the same spec, priors, and run settings.
pub fn emit_effective_config(cfg: &ParsedConfig) -> String {
    let mut out = String::new();
    let list = |names: &[String]| names.join(", ");
    writeln!(out, "[model]").unwrap();
    writeln!(out, "x = {}", list(&cfg.x_names)).unwrap();
    writeln!(out, "u_cont = {}", list(&cfg.u_cont_names)).unwrap();
    writeln!(out, "u_cat = {}", list(&cfg.u_cat_names)).unwrap();
    writeln!(out, "fe = {}", list(&cfg.fe_tokens)).unwrap();
    writeln!(out, "int = {}", list(&cfg.int_tokens)).unwrap();
    writeln!(out, "re = {}", list(&cfg.re_tokens)).unwrap();
    writeln!(out, "C = {}", cfg.spec.c_max).unwrap();
    writeln!(out, "standardize = {}", cfg.spec.standardize).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "[priors]").unwrap();
    writeln!(out, "ridge = {}", cfg.hyper.ridge_precision).unwrap();
    writeln!(out, "noise_shape = {}", cfg.hyper.noise_shape).unwrap();
    writeln!(out, "noise_rate = {}", cfg.hyper.noise_rate).unwrap();
    writeln!(out, "re_scale = {}", scale_value(&cfg.hyper.re_cov_scale)).unwrap();
    writeln!(out, "re_dof = {}", cfg.hyper.re_cov_dof).unwrap();
    writeln!(out, "int_scale = {}", scale_value(&cfg.hyper.int_cov_scale)).unwrap();
    writeln!(out, "int_dof = {}", cfg.hyper.int_cov_dof).unwrap();
    writeln!(out, "assign_shrinkage = {}", cfg.hyper.assign_shrinkage).unwrap();
    writeln!(out, "assign_dof = {}", cfg.hyper.assign_dof).unwrap();
    writeln!(out, "assign_scale = {}", scale_value(&cfg.hyper.assign_scale)).unwrap();
    writeln!(out, "cat_alpha = {}", cfg.hyper.cat_concentration).unwrap();
    writeln!(out, "dp_shape = {}", cfg.hyper.dp_shape).unwrap();
    writeln!(out, "dp_scale = {}", cfg.hyper.dp_scale).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "[run]").unwrap();
    writeln!(out, "iterations = {}", cfg.run.iterations).unwrap();
    writeln!(out, "burn_in = {}", cfg.run.burn_in).unwrap();
    writeln!(out, "thin = {}", cfg.run.thin).unwrap();
    writeln!(out, "seed = {}", cfg.run.seed).unwrap();
    writeln!(out, "n_chains = {}", cfg.run.n_chains).unwrap();
    writeln!(out, "record_loglik = {}", cfg.run.record_loglik).unwrap();
    writeln!(out, "similarity_subset = {}", cfg.post.similarity_subset).unwrap();
    writeln!(out, "k = {}", cfg.post.k).unwrap();
    writeln!(out, "k_max = {}", cfg.post.k_max).unwrap();
    writeln!(out, "credible_level = {}", cfg.post.credible_level).unwrap();
    writeln!(out, "contrast_level = {}", cfg.post.contrast_level).unwrap();
    writeln!(out, "reference_cluster = {}", cfg.post.reference_cluster).unwrap();
    writeln!(out, "min_cluster_frac = {}", cfg.post.min_cluster_frac).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse_config_str("[model]\nu_cont = u1\n").unwrap();
        assert_eq!(cfg.spec.c_max, 60);
        assert_eq!(cfg.spec.fe_cols, vec![0]);
        assert_eq!(cfg.spec.int_cols, vec![0]);
        assert_eq!(cfg.spec.re_cols, vec![0]);
        assert!(cfg.spec.standardize);
        assert_eq!(cfg.run.iterations, 15_000);
        assert_eq!(cfg.run.burn_in, 5_000);
        assert_eq!(cfg.post.credible_level, 0.95);
    }

    #[test]
    fn unknown_keys_and_sections_cite_lines() {
        let err = parse_config_str("[model]\nu_cont = u1\nbogus = 3\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = parse_config_str("[nope]\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn truncation_constraint_cites_line() {
        let err = parse_config_str("[model]\nu_cont = u1\nC = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("at least 2"), "{msg}");
    }

    #[test]
    fn type_mismatch_cites_line() {
        let err =
            parse_config_str("[model]\nu_cont = u1\n[run]\niterations = soon\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("iterations"), "{msg}");
    }

    #[test]
    fn spline_and_roles_resolve_to_indices() {
        let text = "[model]\nx = age, bmi\nu_cont = no2, ozone\nfe = intercept, age, bmi\n\
                    int = intercept, age\nre = spline:3:2:1:4\nC = 30\n";
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.spec.fe_cols, vec![0, 1, 2]);
        assert_eq!(cfg.spec.int_cols, vec![0, 1]);
        assert_eq!(cfg.spec.re_cols, vec![3, 4, 5]);
        let spline = cfg.spec.time_spline.as_ref().unwrap();
        assert_eq!(spline.n_basis, 3);
        assert_eq!(spline.domain, Some((1.0, 4.0)));
        assert_eq!(cfg.hyper.re_cov_scale.dim(), 3);
        assert_eq!(cfg.hyper.assign_scale.dim(), 2);
    }

    #[test]
    fn unknown_design_token_is_rejected() {
        let err = parse_config_str("[model]\nu_cont = u1\nfe = intercept, height\n").unwrap_err();
        assert!(err.to_string().contains("height"), "{err}");
    }

    #[test]
    fn effective_config_round_trips() {
        let text = "[model]\nx = age\nu_cont = no2\nu_cat = smoke\nre = spline:4:2\nC = 12\n\
                    [priors]\nridge = 0.5\nre_dof = 9\n[run]\niterations = 100\nburn_in = 10\nseed = 5\n";
        let cfg = parse_config_str(text).unwrap();
        let emitted = emit_effective_config(&cfg);
        let reparsed = parse_config_str(&emitted).unwrap();
        assert_eq!(cfg.spec, reparsed.spec);
        assert_eq!(cfg.hyper, reparsed.hyper);
        assert_eq!(cfg.run, reparsed.run);
        assert_eq!(cfg.post, reparsed.post);
    }

    #[test]
    fn clustering_covariates_are_required() {
        assert!(parse_config_str("[model]\nx = age\n").is_err());
    }
}
