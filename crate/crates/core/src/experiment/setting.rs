use serde::{Deserialize, Serialize};

use crate::ablation::{build_plan, drop_tokens, AblationSpec, ClassSel, Direction, Mode, PlanOutcome};
use crate::corpus::TaskSpec;
use crate::error::{Error, Result};
use crate::perturbation::VariantSpec;
use crate::prompt::{BuiltPrompt, DemoTemplates, PromptComponents};

pub const STANDARD: &str = "standard";
pub const ZERO_SHOT: &str = "zero-shot";

/// The eight settings of the basic representation-level sweep.
pub const CANONICAL: [&str; 8] = [
    ZERO_SHOT, "zs+cont", "zs+stop", "zs+temp", STANDARD, "icl-cont", "icl-stop", "icl-temp",
];

pub const PRESETS: [&str; 18] = [
    STANDARD,
    ZERO_SHOT,
    "zs+cont",
    "zs+stop",
    "zs+temp",
    "icl-cont",
    "icl-stop",
    "icl-temp",
    "tok-cont",
    "tok-stop",
    "tok-temp",
    "random-fixed",
    "random-nonfixed",
    "swap",
    "template1",
    "template2",
    "template3",
    "template4",
];

/// One prompt-construction condition evaluated in the sweep.
pub trait Setting: Send + Sync {
    fn name(&self) -> &str;

    /// Row whose accuracies this one is compared against.
    fn reference(&self) -> Option<&str> {
        Some(STANDARD)
    }

    fn shots(&self, configured: usize) -> usize {
        configured
    }

    fn templates(&self, task: &TaskSpec, _shots: usize, _seed: u64) -> Result<DemoTemplates> {
        Ok(DemoTemplates::standard(task))
    }

    fn rewrite(&self, components: PromptComponents, _task: &TaskSpec) -> Result<PromptComponents> {
        Ok(components)
    }

    fn plan(&self, _prompt: &BuiltPrompt) -> Result<Option<PlanOutcome>> {
        Ok(None)
    }
}

pub struct Standard;

impl Setting for Standard {
    fn name(&self) -> &str {
        STANDARD
    }

    fn reference(&self) -> Option<&str> {
        None
    }
}

pub struct ZeroShot;

impl Setting for ZeroShot {
    fn name(&self) -> &str {
        ZERO_SHOT
    }

    fn reference(&self) -> Option<&str> {
        None
    }

    fn shots(&self, _configured: usize) -> usize {
        0
    }
}

/// Representation-level ablation applied through a visibility plan.
pub struct RepAblation {
    pub name: String,
    pub spec: AblationSpec,
}

impl Setting for RepAblation {
    fn name(&self) -> &str {
        &self.name
    }

    fn reference(&self) -> Option<&str> {
        Some(match self.spec.direction {
            Direction::Keep => ZERO_SHOT,
            Direction::Drop => STANDARD,
        })
    }

    fn plan(&self, prompt: &BuiltPrompt) -> Result<Option<PlanOutcome>> {
        build_plan(&prompt.spans, &self.spec).map(Some)
    }
}

/// Token-level ablation applied to the prompt text.
pub struct TokenAblation {
    pub name: String,
    pub spec: AblationSpec,
}

impl Setting for TokenAblation {
    fn name(&self) -> &str {
        &self.name
    }

    fn rewrite(&self, components: PromptComponents, task: &TaskSpec) -> Result<PromptComponents> {
        drop_tokens(&components, &self.spec, &task.stopwords)
    }
}

/// Template variant. With `per_seed` the random cue seed follows the run
/// seed, otherwise the variant's own seed is used for every run.
pub struct Perturbed {
    pub name: String,
    pub variant: VariantSpec,
    pub per_seed: bool,
}

impl Perturbed {
    fn seeded(&self, seed: u64) -> VariantSpec {
        match (&self.variant, self.per_seed) {
            (VariantSpec::RandomFixed { .. }, true) => VariantSpec::RandomFixed { seed },
            (VariantSpec::RandomNonfixed { .. }, true) => VariantSpec::RandomNonfixed { seed },
            (v, _) => v.clone(),
        }
    }
}

impl Setting for Perturbed {
    fn name(&self) -> &str {
        &self.name
    }

    fn shots(&self, configured: usize) -> usize {
        match &self.variant {
            VariantSpec::NamedSet { .. } => crate::perturbation::NAMED_SET_SHOTS,
            _ => configured,
        }
    }

    fn templates(&self, task: &TaskSpec, shots: usize, seed: u64) -> Result<DemoTemplates> {
        Ok(self.seeded(seed).materialize(task, shots)?.templates)
    }
}

/// A setting under a user-chosen name, optionally with its own reference
/// row and shot count.
pub struct Renamed {
    pub name: String,
    pub reference: Option<Option<String>>,
    pub shots: Option<usize>,
    pub inner: Box<dyn Setting>,
}

impl Setting for Renamed {
    fn name(&self) -> &str {
        &self.name
    }

    fn reference(&self) -> Option<&str> {
        match &self.reference {
            Some(r) => r.as_deref(),
            None => self.inner.reference(),
        }
    }

    fn shots(&self, configured: usize) -> usize {
        self.shots.unwrap_or_else(|| self.inner.shots(configured))
    }

    fn templates(&self, task: &TaskSpec, shots: usize, seed: u64) -> Result<DemoTemplates> {
        self.inner.templates(task, shots, seed)
    }

    fn rewrite(&self, components: PromptComponents, task: &TaskSpec) -> Result<PromptComponents> {
        self.inner.rewrite(components, task)
    }

    fn plan(&self, prompt: &BuiltPrompt) -> Result<Option<PlanOutcome>> {
        self.inner.plan(prompt)
    }
}

fn coarse(suffix: &str) -> Option<ClassSel> {
    match suffix {
        "cont" => Some(ClassSel::Cont),
        "stop" => Some(ClassSel::Stop),
        "temp" => Some(ClassSel::Temp),
        _ => None,
    }
}

fn unknown(name: &str) -> Error {
    Error::UnknownStrategy {
        kind: "setting",
        name: name.to_string(),
    }
}

/// Looks up a preset by name.
pub fn setting_by_name(name: &str) -> Result<Box<dyn Setting>> {
    let owned = name.to_string();
    let class = |prefix: &str| name.strip_prefix(prefix).and_then(coarse);
    let s: Box<dyn Setting> = match name {
        STANDARD => Box::new(Standard),
        ZERO_SHOT => Box::new(ZeroShot),
        "random-fixed" => Box::new(Perturbed {
            name: owned,
            variant: VariantSpec::RandomFixed { seed: 0 },
            per_seed: true,
        }),
        "random-nonfixed" => Box::new(Perturbed {
            name: owned,
            variant: VariantSpec::RandomNonfixed { seed: 0 },
            per_seed: true,
        }),
        "swap" => Box::new(Perturbed {
            name: owned,
            variant: VariantSpec::Swap,
            per_seed: false,
        }),
        n if crate::perturbation::NAMED_SETS.contains(&n) => Box::new(Perturbed {
            name: owned,
            variant: VariantSpec::NamedSet { name: n.to_string() },
            per_seed: false,
        }),
        _ => {
            if let Some(c) = class("zs+") {
                Box::new(RepAblation {
                    name: owned,
                    spec: AblationSpec::keep(&[c]),
                })
            } else if let Some(c) = class("icl-") {
                Box::new(RepAblation {
                    name: owned,
                    spec: AblationSpec::drop(&[c]),
                })
            } else if let Some(c) = class("tok-") {
                Box::new(TokenAblation {
                    name: owned,
                    spec: AblationSpec::token_drop(&[c]),
                })
            } else {
                return Err(unknown(name));
            }
        }
    };
    Ok(s)
}

/// Setting entry in an experiment config: a preset name or an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SettingConfig {
    Preset(String),
    Custom(CustomSetting),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSetting {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<VariantSpec>,
    /// `null` disables the comparison; absent uses the inner default.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "double_option")]
    pub reference: Option<Option<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
}

mod double_option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Option<String>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|x| x.as_deref()).unwrap_or(None).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<String>>, D::Error> {
        Option::<String>::deserialize(d).map(Some)
    }
}

impl SettingConfig {
    pub fn name(&self) -> &str {
        match self {
            SettingConfig::Preset(n) => n,
            SettingConfig::Custom(c) => &c.name,
        }
    }

    pub fn resolve(&self) -> Result<Box<dyn Setting>> {
        let c = match self {
            SettingConfig::Preset(n) => return setting_by_name(n),
            SettingConfig::Custom(c) => c,
        };
        let given = [c.preset.is_some(), c.ablation.is_some(), c.variant.is_some()];
        if given.iter().filter(|&&x| x).count() > 1 {
            return Err(Error::Config(format!(
                "setting {:?}: give at most one of preset, ablation, variant",
                c.name
            )));
        }
        let inner: Box<dyn Setting> = if let Some(p) = &c.preset {
            setting_by_name(p)?
        } else if let Some(spec) = &c.ablation {
            match spec.mode {
                Mode::Representation => Box::new(RepAblation {
                    name: c.name.clone(),
                    spec: spec.clone(),
                }),
                Mode::Token => Box::new(TokenAblation {
                    name: c.name.clone(),
                    spec: spec.clone(),
                }),
            }
        } else if let Some(v) = &c.variant {
            Box::new(Perturbed {
                name: c.name.clone(),
                variant: v.clone(),
                per_seed: false,
            })
        } else {
            Box::new(Standard)
        };
        Ok(Box::new(Renamed {
            name: c.name.clone(),
            reference: c.reference.clone(),
            shots: c.shots,
            inner,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_resolves() {
        for p in PRESETS {
            let s = setting_by_name(p).unwrap();
            assert_eq!(s.name(), p);
        }
        assert!(setting_by_name("zs+label").is_err());
        assert!(setting_by_name("bogus").is_err());
    }

    #[test]
    fn references() {
        let r = |n: &str| setting_by_name(n).unwrap().reference().map(str::to_string);
        assert_eq!(r("zs+temp").as_deref(), Some(ZERO_SHOT));
        assert_eq!(r("icl-temp").as_deref(), Some(STANDARD));
        assert_eq!(r("tok-stop").as_deref(), Some(STANDARD));
        assert_eq!(r("swap").as_deref(), Some(STANDARD));
        assert_eq!(r(STANDARD), None);
        assert_eq!(r(ZERO_SHOT), None);
    }

    #[test]
    fn shots() {
        assert_eq!(setting_by_name(ZERO_SHOT).unwrap().shots(4), 0);
        assert_eq!(setting_by_name("template1").unwrap().shots(4), 3);
        assert_eq!(setting_by_name("template2").unwrap().shots(4), 3);
        assert_eq!(setting_by_name("icl-cont").unwrap().shots(4), 4);
    }

    #[test]
    fn custom_config() {
        let json = r#"[
            "standard",
            {"name": "keep-colon", "ablation": {"direction": "keep", "classes": ["COLON"]}},
            {"name": "mine", "preset": "zs+temp", "reference": null},
            {"name": "rf7", "variant": {"kind": "random_fixed", "seed": 7}, "shots": 2}
        ]"#;
        let cfgs: Vec<SettingConfig> = serde_json::from_str(json).unwrap();
        let s: Vec<_> = cfgs.iter().map(|c| c.resolve().unwrap()).collect();
        assert_eq!(s[1].name(), "keep-colon");
        assert_eq!(s[1].reference(), Some(ZERO_SHOT));
        assert_eq!(s[2].reference(), None);
        assert_eq!(s[3].shots(4), 2);
        let back = serde_json::to_string(&cfgs).unwrap();
        let again: Vec<SettingConfig> = serde_json::from_str(&back).unwrap();
        assert_eq!(again, cfgs);
        let both = r#"{"name": "x", "preset": "swap", "variant": {"kind": "swap"}}"#;
        let c: SettingConfig = serde_json::from_str(both).unwrap();
        assert!(c.resolve().is_err());
    }
}
