//! Published metadata for the five CLIP variants (parameter counts,
//! approximate GPU throughput, approximate embedding VRAM at batch size 1).
//!
//! Counts marked approximate in the source tables are stored as exact integers.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ArchFamily {
    ViT,
    ResNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelMeta {
    pub name: &'static str,
    pub image_params: u64,
    pub text_params: u64,
    pub total_params: u64,
    /// Approximate frames per second on a high-end GPU.
    pub fps_range: (u32, u32),
    /// Approximate VRAM in GB for embedding at batch size 1.
    pub vram_gb: (u32, u32),
    pub arch_family: ArchFamily,
    /// Backbone, e.g. `ViT-Base` or `ResNet-50`.
    pub backbone: &'static str,
}

const M: u64 = 1_000_000;

pub const MODELS: [ModelMeta; 5] = [
    ModelMeta {
        name: "ViT-B/32",
        image_params: 86 * M,
        text_params: 63 * M,
        total_params: 149 * M,
        fps_range: (150, 200),
        vram_gb: (1, 2),
        arch_family: ArchFamily::ViT,
        backbone: "ViT-Base",
    },
    ModelMeta {
        name: "ViT-B/16",
        image_params: 86 * M,
        text_params: 63 * M,
        total_params: 149 * M,
        fps_range: (80, 120),
        vram_gb: (2, 3),
        arch_family: ArchFamily::ViT,
        backbone: "ViT-Base",
    },
    ModelMeta {
        name: "ViT-L/14",
        image_params: 304 * M,
        text_params: 123 * M,
        total_params: 427 * M,
        fps_range: (30, 60),
        vram_gb: (4, 6),
        arch_family: ArchFamily::ViT,
        backbone: "ViT-Large",
    },
    ModelMeta {
        name: "RN50",
        image_params: 102 * M,
        text_params: 63 * M,
        total_params: 165 * M,
        fps_range: (120, 160),
        vram_gb: (2, 3),
        arch_family: ArchFamily::ResNet,
        backbone: "ResNet-50",
    },
    ModelMeta {
        name: "RN101",
        image_params: 152 * M,
        text_params: 63 * M,
        total_params: 215 * M,
        fps_range: (70, 100),
        vram_gb: (3, 4),
        arch_family: ArchFamily::ResNet,
        backbone: "ResNet-101",
    },
];

/// Looks up a model by name. An optional `CLIP ` prefix is accepted.
pub fn model_registry_lookup(name: &str) -> Result<&'static ModelMeta> {
    let key = name.trim();
    let key = key.strip_prefix("CLIP ").unwrap_or(key).trim();
    MODELS
        .iter()
        .find(|m| m.name == key)
        .ok_or_else(|| Error::UnknownModel(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vit_l14() {
        let m = model_registry_lookup("ViT-L/14").unwrap();
        assert_eq!(m.total_params, 427_000_000);
        assert_eq!(m.fps_range, (30, 60));
        assert_eq!(m.vram_gb, (4, 6));
    }

    #[test]
    fn rn50_and_prefix() {
        let m = model_registry_lookup("CLIP RN50").unwrap();
        assert_eq!(m.total_params, 165_000_000);
        assert_eq!(m.fps_range, (120, 160));
        assert_eq!(m.arch_family, ArchFamily::ResNet);
    }

    #[test]
    fn unknown_model() {
        assert!(matches!(
            model_registry_lookup("ViT-H/14"),
            Err(Error::UnknownModel(_))
        ));
    }

    #[test]
    fn totals_are_sums() {
        for m in &MODELS {
            assert_eq!(m.image_params + m.text_params, m.total_params, "{}", m.name);
            assert!(m.fps_range.0 <= m.fps_range.1);
            assert!(m.vram_gb.0 <= m.vram_gb.1);
        }
    }
}
