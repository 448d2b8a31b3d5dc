//! The instruction library file, its construction from a build manifest,
//! and model-level cycle totals.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dispatch::{default_rules, dispatch_operator, DispatchRule, OperatorInstance};
use super::profile::{build_profile, kernel_cycles, KernelProfile};
use super::LibError;
use crate::disasm::{parse_disasm, Arch, CpiTable, Isa};
use crate::expr::parse_expr;
use crate::mapper::map_function;
use crate::srcfeat::parse_src_cfg;

pub const LIBRARY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionLibrary {
    pub format_version: u32,
    pub architecture: String,
    pub tflm_version_tag: String,
    pub cpi: CpiTable,
    pub kernels: BTreeMap<String, KernelProfile>,
    pub dispatch_rules: Vec<DispatchRule>,
    /// SHA-256 over every build input; a changed kernel source changes it.
    pub input_hash: String,
}

impl InstructionLibrary {
    pub fn validate(&self) -> Result<(), LibError> {
        if self.format_version != LIBRARY_FORMAT_VERSION {
            return Err(LibError::Format(format!(
                "library format version {} is not supported (expected {}); rebuild the library",
                self.format_version, LIBRARY_FORMAT_VERSION
            )));
        }
        self.cpi
            .validate()
            .map_err(|e| LibError::Format(e.to_string()))?;
        for (name, k) in &self.kernels {
            if name != &k.kernel_name {
                return Err(LibError::Format(format!(
                    "kernel stored under {name:?} is named {:?}",
                    k.kernel_name
                )));
            }
            k.validate()?;
        }
        for r in &self.dispatch_rules {
            for k in &r.kernels {
                if !self.kernels.contains_key(k) {
                    return Err(LibError::MissingKernel(k.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<InstructionLibrary, LibError> {
        let lib: InstructionLibrary =
            serde_json::from_str(text).map_err(|e| LibError::Format(e.to_string()))?;
        lib.validate()?;
        Ok(lib)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serialization cannot fail")
    }

    pub fn kernel(&self, name: &str) -> Result<&KernelProfile, LibError> {
        self.kernels
            .get(name)
            .ok_or_else(|| LibError::MissingKernel(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelCycles {
    pub kernel: String,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorCycles {
    pub op_type: String,
    pub kernels: Vec<KernelCycles>,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCycles {
    pub total: u64,
    pub operators: Vec<OperatorCycles>,
}

pub fn operator_cycles(
    op: &OperatorInstance,
    lib: &InstructionLibrary,
) -> Result<OperatorCycles, LibError> {
    let mut kernels = Vec::new();
    let mut sum: u64 = 0;
    for name in dispatch_operator(op, &lib.dispatch_rules)? {
        let c = kernel_cycles(lib.kernel(name)?, &op.params, &lib.cpi)?;
        sum = sum.checked_add(c).ok_or(LibError::Overflow)?;
        kernels.push(KernelCycles {
            kernel: name.clone(),
            cycles: c,
        });
    }
    Ok(OperatorCycles {
        op_type: op.op_type.clone(),
        kernels,
        cycles: sum,
    })
}

/// Total cycles of a lowered model with a per-operator breakdown in input
/// order.
pub fn model_cycles(
    model: &[OperatorInstance],
    lib: &InstructionLibrary,
) -> Result<ModelCycles, LibError> {
    let operators = model
        .iter()
        .map(|op| operator_cycles(op, lib))
        .collect::<Result<Vec<_>, _>>()?;
    let total = operators
        .iter()
        .try_fold(0u64, |acc, o| acc.checked_add(o.cycles))
        .ok_or(LibError::Overflow)?;
    Ok(ModelCycles { total, operators })
}

/// Build input: where each kernel's source CFG and disassembly live.
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub architecture: String,
    pub tflm_version_tag: String,
    pub cpi: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isa: Option<PathBuf>,
    pub kernels: Vec<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispatch_rules: Option<Vec<DispatchRule>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub name: String,
    pub src_cfg: PathBuf,
    pub disasm: PathBuf,
    /// Function symbol in the listing; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
    /// Trip expressions by source header node, added to (and overriding)
    /// those in the source CFG file.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub trip_exprs: BTreeMap<String, String>,
}

/// Build options that do not live in the manifest.
#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub seed: u64,
    pub cpi_override: Option<PathBuf>,
    pub isa_override: Option<PathBuf>,
}

struct Inputs {
    hasher: Sha256,
}

impl Inputs {
    fn read(&mut self, path: &Path) -> Result<String, LibError> {
        let text = std::fs::read_to_string(path).map_err(|source| LibError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.absorb(&path.to_string_lossy(), text.as_bytes());
        Ok(text)
    }

    fn absorb(&mut self, label: &str, bytes: &[u8]) {
        // file names are hashed as given relative to the manifest
        let label = label.rsplit('/').next().unwrap_or(label);
        self.hasher.update((label.len() as u64).to_le_bytes());
        self.hasher.update(label.as_bytes());
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }
}

pub fn build_library(
    manifest_path: &Path,
    opts: &BuildOptions,
) -> Result<InstructionLibrary, LibError> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut inputs = Inputs {
        hasher: Sha256::new(),
    };
    let manifest_text = inputs.read(manifest_path)?;
    let manifest: BuildManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| LibError::Format(format!("{}: {e}", manifest_path.display())))?;
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let cpi_path = opts
        .cpi_override
        .clone()
        .unwrap_or_else(|| resolve(&manifest.cpi));
    let cpi = CpiTable::from_json(&inputs.read(&cpi_path)?)
        .map_err(|e| LibError::Format(format!("{}: {e}", cpi_path.display())))?;
    let isa = match opts
        .isa_override
        .clone()
        .or_else(|| manifest.isa.as_deref().map(resolve))
    {
        Some(p) => Isa::from_json(&inputs.read(&p)?)
            .map_err(|e| LibError::Format(format!("{}: {e}", p.display())))?,
        None => {
            let arch: Arch = manifest
                .architecture
                .parse()
                .map_err(|e: crate::disasm::DisasmError| LibError::Format(e.to_string()))?;
            Isa::for_arch(arch)
        }
    };

    let mut kernels = BTreeMap::new();
    for spec in &manifest.kernels {
        let profile = build_kernel(spec, &resolve, &mut inputs, &isa, opts.seed)?;
        if kernels.insert(spec.name.clone(), profile).is_some() {
            return Err(LibError::Format(format!(
                "kernel {:?} listed twice",
                spec.name
            )));
        }
    }

    let dispatch_rules = manifest
        .dispatch_rules
        .clone()
        .unwrap_or_else(default_rules);
    inputs.absorb(
        "dispatch_rules",
        serde_json::to_string(&dispatch_rules)
            .unwrap_or_default()
            .as_bytes(),
    );
    inputs.absorb("seed", &opts.seed.to_le_bytes());
    let lib = InstructionLibrary {
        format_version: LIBRARY_FORMAT_VERSION,
        architecture: manifest.architecture.clone(),
        tflm_version_tag: manifest.tflm_version_tag.clone(),
        cpi,
        kernels,
        dispatch_rules,
        input_hash: hex::encode(inputs.hasher.finalize()),
    };
    lib.validate()?;
    Ok(lib)
}

fn build_kernel(
    spec: &KernelSpec,
    resolve: &dyn Fn(&Path) -> PathBuf,
    inputs: &mut Inputs,
    isa: &Isa,
    seed: u64,
) -> Result<KernelProfile, LibError> {
    let src_path = resolve(&spec.src_cfg);
    let mut src = parse_src_cfg(&inputs.read(&src_path)?).map_err(|e| LibError::Input {
        path: src_path.clone(),
        message: e.to_string(),
    })?;
    for (node, text) in &spec.trip_exprs {
        let id = node
            .trim()
            .parse()
            .ok()
            .filter(|id| src.cfg.contains(*id))
            .ok_or_else(|| LibError::Input {
                path: src_path.clone(),
                message: format!(
                    "kernel {}: trip expression for unknown node {node:?}",
                    spec.name
                ),
            })?;
        let e = parse_expr(text).map_err(|e| LibError::Input {
            path: src_path.clone(),
            message: format!("kernel {}: node {node}: {e}", spec.name),
        })?;
        src.loop_trip_vars.insert(id, e);
    }

    let dis_path = resolve(&spec.disasm);
    let listing = parse_disasm(&inputs.read(&dis_path)?).map_err(|e| LibError::Input {
        path: dis_path.clone(),
        message: e.to_string(),
    })?;
    let symbol = spec.symbol.as_deref().unwrap_or(&spec.name);
    let bin = listing.function(symbol).ok_or_else(|| LibError::Input {
        path: dis_path.clone(),
        message: format!("no function <{symbol}> in listing"),
    })?;

    let mapping = map_function(&src, bin, isa, seed).map_err(|source| LibError::Map {
        kernel: spec.name.clone(),
        source,
    })?;
    if mapping.ambiguous {
        log::warn!(
            "kernel {}: loop mapping is ambiguous; using {:?}",
            spec.name,
            mapping.best.pairs
        );
    }
    let mut profile = build_profile(&mapping.best, &src, bin, isa)?;
    profile.kernel_name = spec.name.clone();
    Ok(profile)
}
