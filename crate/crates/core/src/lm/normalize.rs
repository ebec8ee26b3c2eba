//! Text normalization applied before tokenizer training and scoring.

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;
use unicode_script::{Script, UnicodeScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    pub strip_accents: bool,
    pub digits_to_zero: bool,
    pub unicode_punct_to_ascii: bool,
    pub remove_non_printing: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            lowercase: true,
            strip_accents: true,
            digits_to_zero: true,
            unicode_punct_to_ascii: true,
            remove_non_printing: true,
        }
    }
}

fn punct_to_ascii(c: char) -> Option<&'static str> {
    Some(match c {
        '，' | '、' => ",",
        '。' => ".",
        '„' | '“' | '”' | '«' | '»' | '″' | '《' | '》' => "\"",
        '‘' | '’' | '‚' | '‛' | '′' => "'",
        '–' | '—' | '‐' | '‑' | '‒' | '―' | '−' => "-",
        '【' | '〔' => "[",
        '】' | '〕' => "]",
        '（' => "(",
        '）' => ")",
        '：' => ":",
        '；' => ";",
        '！' => "!",
        '？' => "?",
        '…' => "...",
        _ => return None,
    })
}

/// An accent is a nonspacing mark of the Inherited script, i.e. a combining
/// diacritic shared across scripts. Indic vowel signs and viramas belong to
/// their own scripts and are kept.
fn is_accent(c: char) -> bool {
    get_general_category(c) == GeneralCategory::NonspacingMark && c.script() == Script::Inherited
}

/// Removes non-printing characters, strips accents, lowercases, maps every
/// decimal digit to `0` and Unicode punctuation to ASCII, then recomposes.
pub fn normalize(text: &str, cfg: &NormalizationConfig) -> String {
    let mut s: String = if cfg.remove_non_printing {
        text.chars()
            .filter(|&c| c == '\n' || c == '\t' || get_general_category(c) != GeneralCategory::Control)
            .collect()
    } else {
        text.to_string()
    };
    if cfg.strip_accents {
        s = s.nfkd().filter(|&c| !is_accent(c)).collect();
    }
    if cfg.lowercase {
        s = s.to_lowercase();
        if cfg.strip_accents {
            // Some lowercase mappings emit combining marks ('İ' -> "i\u{307}").
            s = s.nfkd().filter(|&c| !is_accent(c)).collect();
        }
    }
    if cfg.digits_to_zero {
        s = s
            .chars()
            .map(|c| if get_general_category(c) == GeneralCategory::DecimalNumber { '0' } else { c })
            .collect();
    }
    if cfg.unicode_punct_to_ascii {
        let mut out = String::with_capacity(s.len());
        for c in s.chars() {
            match punct_to_ascii(c) {
                Some(r) => out.push_str(r),
                None => out.push(c),
            }
        }
        s = out;
    }
    s.nfc().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let cfg = NormalizationConfig::default();
        assert_eq!(normalize("Résumé 123!", &cfg), "resume 000!");
        assert_eq!(normalize("١٢٣", &cfg), "000");
        assert_eq!(normalize("", &cfg), "");
        assert_eq!(normalize("“Quote” — dash…", &cfg), "\"quote\" - dash...");
        assert_eq!(normalize("a\u{0}b\tc\nd", &cfg), "ab\tc\nd");
        assert_eq!(normalize("नमस्ते २०२४", &cfg), "नमस्ते 0000");
    }

    #[test]
    fn switches_off() {
        let cfg = NormalizationConfig {
            lowercase: false,
            strip_accents: false,
            digits_to_zero: false,
            unicode_punct_to_ascii: false,
            remove_non_printing: false,
        };
        assert_eq!(normalize("Résumé 12…", &cfg), "Résumé 12…");
    }

    proptest! {
        #[test]
        fn idempotent(text in "\\PC{0,40}") {
            let cfg = NormalizationConfig::default();
            let once = normalize(&text, &cfg);
            prop_assert_eq!(normalize(&once, &cfg), once);
        }

        #[test]
        fn idempotent_indic(text in "[a-zA-Zअ-ह०-९ािीुूेैोौंः़्ஂ-௺ 0-9.,!?“”‘’—…]{0,40}") {
            let cfg = NormalizationConfig::default();
            let once = normalize(&text, &cfg);
            prop_assert_eq!(normalize(&once, &cfg), once);
        }
    }
}
