//! Scenario files (TOML) and custom model files (JSON).

use std::path::{Path, PathBuf};

use damlab_core::dam::ApparatusConfig;
use damlab_core::estimation::LinkFunction;
use damlab_core::liouvillian::{
    gad_model, product_gad_model, steady_state_bundle, AffineJump, LindbladModel, ParamDomain,
};
use damlab_core::operator::{qubit, Operator};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: Option<u64>,
    pub model: ModelSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub apparatus: ApparatusSection,
    #[serde(default)]
    pub dam: DamSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub qfi: QfiSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `gad`, `product_gad` or `custom`.
    pub kind: String,
    pub qubits: Option<usize>,
    /// Custom model JSON, relative to the scenario file.
    pub file: Option<PathBuf>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    /// `identity`, `table` or `model`.
    pub kind: String,
    pub theta: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    /// Table size for `kind = "model"`.
    pub points: Option<usize>,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            kind: "identity".into(),
            theta: None,
            values: None,
            points: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApparatusSection {
    pub sigma: f64,
    pub p_points: usize,
    pub p_half_width: f64,
    pub q_points: usize,
    pub q_half_width: f64,
}

impl Default for ApparatusSection {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            p_points: ApparatusConfig::DEFAULT_P_POINTS,
            p_half_width: ApparatusConfig::DEFAULT_P_HALF_WIDTH,
            q_points: ApparatusConfig::DEFAULT_Q_POINTS,
            q_half_width: ApparatusConfig::DEFAULT_Q_HALF_WIDTH,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DamSection {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub trials: usize,
}

impl Default for DamSection {
    fn default() -> Self {
        Self {
            t: 200.0,
            n: 1.0,
            trials: 4000,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// `N`, `T` or `theta`.
    pub axis: String,
    pub values: Vec<f64>,
    /// With `axis = "T"`, couple `N = n_over_t * T` instead of holding N.
    pub n_over_t: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QfiSection {
    pub times: Vec<f64>,
    pub probes: usize,
    pub product_probes: usize,
}

impl Default for QfiSection {
    fn default() -> Self {
        Self {
            times: vec![0.0, 0.5, 1.0, 3.0, 20.0],
            probes: 20,
            product_probes: 5,
        }
    }
}

/// Settings of the acceptance suite. Defaults reproduce the published
/// criteria.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub theta: f64,
    pub povm_n: u64,
    pub povm_trials: usize,
    pub steady_thetas: Vec<f64>,
    pub oracle_operators: usize,
    pub pointer_t: f64,
    pub nonadiabatic_t: Vec<f64>,
    pub adiabatic_limit_t: f64,
    pub scaling_t: f64,
    pub scaling_n: Vec<f64>,
    pub scaling_trials: usize,
    pub perturbative_t: f64,
    pub perturbative_n: f64,
    pub qfi_time: f64,
    pub multiparam_theta: Vec<f64>,
    pub multiparam_n: f64,
    pub multiparam_t: f64,
    pub multiparam_trials: usize,
    /// Apparatus width for the non-adiabaticity check.
    pub nonadiabatic_sigma: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            theta: 0.3,
            povm_n: 10_000,
            povm_trials: 2000,
            steady_thetas: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            oracle_operators: 200,
            pointer_t: 200.0,
            nonadiabatic_t: vec![100.0, 200.0, 400.0],
            adiabatic_limit_t: 1e5,
            scaling_t: 2000.0,
            scaling_n: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            scaling_trials: 4000,
            perturbative_t: 500.0,
            perturbative_n: 5.0,
            qfi_time: 1.0,
            multiparam_theta: vec![0.2, 0.6],
            multiparam_n: 10.0,
            multiparam_t: 500.0,
            multiparam_trials: 2000,
            nonadiabatic_sigma: 0.3,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomModelFile {
    name: Option<String>,
    dim: usize,
    domain: Vec<[f64; 2]>,
    hamiltonian: Vec<Vec<[f64; 2]>>,
    jumps: Vec<CustomJump>,
    observables: Vec<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomJump {
    operator: Vec<Vec<[f64; 2]>>,
    rate: AffineRate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineRate {
    #[serde(rename = "const")]
    constant: f64,
    slope: Vec<f64>,
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub seed: u64,
    pub model: LindbladModel,
    pub theta: Vec<f64>,
    pub observables: Vec<Operator>,
    pub link: LinkFunction,
    pub apparatus: ApparatusConfig,
    /// SHA-256 of the scenario text and effective seed.
    pub hash: String,
}

impl Scenario {
    pub fn load(path: &Path, seed_override: Option<u64>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base, seed_override)
    }

    pub fn parse(text: &str, base: &Path, seed_override: Option<u64>) -> CliResult<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| CliError::config(format!("scenario: {e}")))?;
        let seed = seed_override
            .or(file.seed)
            .ok_or_else(|| CliError::config("a seed is required (scenario `seed` or --seed)"))?;

        let (model, observables) = build_model(&file.model, base)?;
        let theta = file.model.theta.clone();
        model
            .domain()
            .check(&theta)
            .map_err(|e| CliError::config(format!("model.theta: {e}")))?;
        if observables.len() != model.param_dim() {
            return Err(CliError::config(format!(
                "{} observables for {} parameters",
                observables.len(),
                model.param_dim()
            )));
        }
        let link = build_link(&file.link, &model, &observables)?;
        let ap = &file.apparatus;
        let apparatus = ApparatusConfig::with_resolution(
            ap.sigma,
            ap.p_points,
            ap.p_half_width,
            ap.q_points,
            ap.q_half_width,
        )
        .map_err(|e| CliError::config(format!("apparatus: {e}")))?;
        if let Some(sweep) = &file.sweep {
            validate_sweep(sweep)?;
        }
        validate_verify(&file.verify)?;
        if !(file.dam.t > 0.0 && file.dam.n >= 1.0) {
            return Err(CliError::config("dam: need T > 0 and N >= 1"));
        }

        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        hasher.update(format!("\nseed={seed}\n").as_bytes());
        let hash: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            file,
            seed,
            model,
            theta,
            observables,
            link,
            apparatus,
            hash,
        })
    }

    pub fn single_observable(&self) -> CliResult<&Operator> {
        match self.observables.as_slice() {
            [a] => Ok(a),
            _ => Err(CliError::config(
                "this command needs a single-parameter model",
            )),
        }
    }
}

fn build_model(section: &ModelSection, base: &Path) -> CliResult<(LindbladModel, Vec<Operator>)> {
    match section.kind.as_str() {
        "gad" => Ok((gad_model(), vec![qubit::ground_projector()])),
        "product_gad" => {
            let m = section
                .qubits
                .ok_or_else(|| CliError::config("model.qubits is required for product_gad"))?;
            let model = product_gad_model(m).map_err(|e| CliError::config(e.to_string()))?;
            let obs = (0..m).map(|k| qubit::embed(&qubit::ground_projector(), k, m)).collect();
            Ok((model, obs))
        }
        "custom" => {
            let rel = section
                .file
                .as_ref()
                .ok_or_else(|| CliError::config("model.file is required for custom models"))?;
            let path = base.join(rel);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            parse_custom_model(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        }
        other => Err(CliError::config(format!("unknown model kind '{other}'"))),
    }
}

fn to_operator(rows: &[Vec<[f64; 2]>], d: usize, what: &str) -> Result<Operator, String> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(format!("{what} must be a {d}x{d} matrix"));
    }
    let rows: Vec<Vec<(f64, f64)>> = rows
        .iter()
        .map(|r| r.iter().map(|z| (z[0], z[1])).collect())
        .collect();
    Operator::from_rows(&rows).map_err(|e| format!("{what}: {e}"))
}

/// Parses the JSON model format; parse errors carry line and column.
pub fn parse_custom_model(text: &str) -> Result<(LindbladModel, Vec<Operator>), String> {
    let raw: CustomModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let d = raw.dim;
    let domain = ParamDomain::new(raw.domain.iter().map(|b| (b[0], b[1])).collect())
        .map_err(|e| format!("domain: {e}"))?;
    let h = to_operator(&raw.hamiltonian, d, "hamiltonian")?;
    let jumps = raw
        .jumps
        .iter()
        .enumerate()
        .map(|(k, j)| {
            Ok(AffineJump {
                operator: to_operator(&j.operator, d, &format!("jumps[{k}].operator"))?,
                constant: j.rate.constant,
                slope: j.rate.slope.clone(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let observables = raw
        .observables
        .iter()
        .enumerate()
        .map(|(k, m)| to_operator(m, d, &format!("observables[{k}]")))
        .collect::<Result<Vec<_>, String>>()?;
    let name = raw.name.unwrap_or_else(|| "custom".into());
    let model = LindbladModel::affine(name, h, jumps, domain).map_err(|e| e.to_string())?;
    Ok((model, observables))
}

fn build_link(
    section: &LinkSection,
    model: &LindbladModel,
    observables: &[Operator],
) -> CliResult<LinkFunction> {
    match section.kind.as_str() {
        "identity" => Ok(LinkFunction::identity(model.domain().clone())),
        "table" => {
            let (Some(t), Some(v)) = (&section.theta, &section.values) else {
                return Err(CliError::config("link.theta and link.values are required"));
            };
            if model.param_dim() != 1 {
                return Err(CliError::config("table links are single-parameter"));
            }
            LinkFunction::from_table(t.clone(), v.clone())
                .map_err(|e| CliError::config(format!("link: {e}")))
        }
        "model" => {
            if model.param_dim() != 1 {
                return Err(CliError::config("model links are single-parameter"));
            }
            let points = section.points.unwrap_or(201);
            if points < 3 {
                return Err(CliError::config("link.points must be at least 3"));
            }
            let (lo, hi) = model.domain().bounds()[0];
            // stay strictly inside the open domain
            let pad = 1e-6 * (hi - lo);
            let thetas: Vec<f64> = (0..points)
                .map(|k| lo + pad + (hi - lo - 2.0 * pad) * k as f64 / (points - 1) as f64)
                .collect();
            let values = thetas
                .iter()
                .map(|&t| Ok(steady_state_bundle(model, &[t])?.expectation(&observables[0])))
                .collect::<damlab_core::Result<Vec<f64>>>()?;
            LinkFunction::from_table(thetas, values)
                .map_err(|e| CliError::config(format!("link from model: {e}")))
        }
        other => Err(CliError::config(format!("unknown link kind '{other}'"))),
    }
}

fn sorted_nonempty(values: &[f64], what: &str) -> CliResult<()> {
    if values.is_empty() {
        return Err(CliError::config(format!("{what} is empty")));
    }
    if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::config(format!("{what} must be finite and strictly increasing")));
    }
    Ok(())
}

fn validate_sweep(sweep: &SweepSection) -> CliResult<()> {
    sorted_nonempty(&sweep.values, "sweep.values")?;
    match sweep.axis.as_str() {
        "N" if sweep.values[0] < 1.0 => Err(CliError::config("sweep over N needs N >= 1")),
        "T" if sweep.values[0] <= 0.0 => Err(CliError::config("sweep over T needs T > 0")),
        "N" | "T" | "theta" => Ok(()),
        other => Err(CliError::config(format!("unknown sweep axis '{other}'"))),
    }
}

fn validate_verify(v: &VerifySection) -> CliResult<()> {
    sorted_nonempty(&v.nonadiabatic_t, "verify.nonadiabatic_t")?;
    sorted_nonempty(&v.scaling_n, "verify.scaling_n")?;
    sorted_nonempty(&v.steady_thetas, "verify.steady_thetas")?;
    if v.nonadiabatic_t.len() < 2 || v.scaling_n.len() < 2 {
        return Err(CliError::config("verify sweeps need at least two values"));
    }
    if v.multiparam_theta.len() != 2 {
        return Err(CliError::config("verify.multiparam_theta needs two entries"));
    }
    let positive = [
        v.pointer_t,
        v.adiabatic_limit_t,
        v.scaling_t,
        v.perturbative_t,
        v.multiparam_t,
        v.perturbative_n,
        v.multiparam_n,
        v.nonadiabatic_sigma,
    ];
    if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) || v.qfi_time < 0.0 {
        return Err(CliError::config("verify times and multipliers must be positive"));
    }
    if v.scaling_n[0] < 1.0 || v.perturbative_n < 1.0 || v.multiparam_n < 1.0 {
        return Err(CliError::config("verify multipliers must be at least 1"));
    }
    if v.povm_trials < 100 || v.scaling_trials < 100 || v.multiparam_trials < 100 {
        return Err(CliError::config("verify needs at least 100 trials per experiment"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAD: &str = "seed = 1\n[model]\nkind = \"gad\"\ntheta = [0.3]\n";

    #[test]
    fn minimal_gad_scenario() {
        let s = Scenario::parse(GAD, Path::new("."), None).unwrap();
        assert_eq!(s.seed, 1);
        assert_eq!(s.theta, vec![0.3]);
        assert_eq!(s.apparatus.sigma, 0.1);
        assert_eq!(s.hash.len(), 64);
        let other = Scenario::parse(GAD, Path::new("."), Some(2)).unwrap();
        assert_ne!(s.hash, other.hash);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = "[model]\nkind = \"gad\"\ntheta = [0.3]\n";
        assert!(matches!(Scenario::parse(text, Path::new("."), None), Err(CliError::Config(_))));
        assert!(Scenario::parse(text, Path::new("."), Some(4)).is_ok());
    }

    #[test]
    fn theta_out_of_domain() {
        let text = "seed = 1\n[model]\nkind = \"gad\"\ntheta = [1.3]\n";
        let err = Scenario::parse(text, Path::new("."), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("outside"), "{err}");
    }

    #[test]
    fn empty_or_unsorted_sweep_rejected() {
        for values in ["[]", "[3.0, 1.0]"] {
            let text = format!("{GAD}[sweep]\naxis = \"N\"\nvalues = {values}\n");
            assert!(Scenario::parse(&text, Path::new("."), None).is_err());
        }
    }

    #[test]
    fn toml_errors_report_lines() {
        let text = "seed = 1\n[model]\nkind = \"gad\"\ntheta = [0.3\n";
        let err = Scenario::parse(text, Path::new("."), None).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn custom_model_round_trip() {
        let json = r#"{
  "name": "gad_json",
  "dim": 2,
  "domain": [[0.0, 1.0]],
  "hamiltonian": [[[0,0],[0,0]],[[0,0],[0,0]]],
  "jumps": [
    {"operator": [[[0,0],[1,0]],[[0,0],[0,0]]], "rate": {"const": 0.0, "slope": [1.0]}},
    {"operator": [[[0,0],[0,0]],[[1,0],[0,0]]], "rate": {"const": 1.0, "slope": [-1.0]}}
  ],
  "observables": [[[[1,0],[0,0]],[[0,0],[0,0]]]]
}"#;
        let (model, obs) = parse_custom_model(json).unwrap();
        assert_eq!(model.liouvillian(&[0.3]).unwrap(), gad_model().liouvillian(&[0.3]).unwrap());
        assert_eq!(obs[0], qubit::ground_projector());
        let err = parse_custom_model("{\n  \"dim\": 2,\n  \"domain\": oops\n}").unwrap_err();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn model_link_inverts_expectation() {
        let text = format!("{GAD}[link]\nkind = \"model\"\npoints = 51\n");
        let s = Scenario::parse(&text, Path::new("."), None).unwrap();
        let back = s.link.inverse(&[0.3]).unwrap()[0];
        assert!((back - 0.3).abs() < 1e-9);
    }
}
