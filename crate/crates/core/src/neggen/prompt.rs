use serde::Serialize;

use super::NegGenError;
use crate::corpus::NegType;

/// Tag recorded in provenance for the prompt wording below.
pub const TEMPLATE_VERSION: &str = "prose-v1";

/// Reply token the swap prompt asks for when no sensible recomposition exists.
pub const NO_CANDIDATE: &str = "NONE";

const REPLACE_SYSTEM: &str = "\
You create hard negative captions for image-text matching.
The user message is a caption that correctly describes an image.
Identify the key components of the caption (nouns, adjectives, verbs, prepositions, numbers) \
and replace one of them with another plausible substitute, so the new caption is fluent \
but no longer matches the image. Keep every other word unchanged.
Reply with the new caption only.

Examples:
Input: a photo of a broken down stop sign
Output: a photo of a brand new stop sign

Input: a cute cat looking at a bird
Output: a cute dog looking at a bird

Input: a knife is on the table
Output: a spoon is on the table";

const SWAP_SYSTEM: &str = "\
You create hard negative captions for image-text matching.
The user message is a caption that correctly describes an image.
First break the caption down into its key components. Then construct a new sentence \
that uses the same components but means something different, for example by swapping \
the positions of two components. Judge whether the new sentence makes sense. If the \
caption has too few components to build a sensible sentence with a different meaning, \
answer NONE as the new caption.
Answer in exactly this format:
Components: <comma-separated components>
New caption: <new sentence or NONE>

Examples:
Input: an airplane is flying in the blue sky
Components: airplane, flying, blue, sky
New caption: a blue airplane is flying in the sky

Input: an apple is to the left of a banana
Components: apple, left, banana
New caption: a banana is to the left of an apple

Input: horse eating grass
Components: horse, eating, grass
New caption: grass eating horse";

/// A fully instantiated request for one caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptPayload {
    pub system_text: String,
    pub user_text: String,
    pub strategy: NegType,
    pub source_caption: String,
}

pub fn build_prompt(caption: &str, strategy: NegType) -> Result<PromptPayload, NegGenError> {
    if caption.trim().is_empty() {
        return Err(NegGenError::EmptyCaption);
    }
    let system = match strategy {
        NegType::Replace => REPLACE_SYSTEM,
        NegType::Swap => SWAP_SYSTEM,
    };
    Ok(PromptPayload {
        system_text: system.to_string(),
        user_text: caption.to_string(),
        strategy,
        source_caption: caption.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replace_payload_embeds_caption_once() {
        let p = build_prompt("a cute cat looking at a bird", NegType::Replace).unwrap();
        assert_eq!(p.user_text.matches("a cute cat looking at a bird").count(), 1);
        assert!(p.system_text.contains("replace one of them"));
        assert!(p.system_text.contains("a photo of a brand new stop sign"));
    }

    #[test]
    fn swap_payload_asks_for_breakdown_then_recomposition() {
        let p = build_prompt("an airplane is flying in the blue sky", NegType::Swap).unwrap();
        let breakdown = p.system_text.find("break the caption down").unwrap();
        let compose = p.system_text.find("construct a new sentence").unwrap();
        assert!(breakdown < compose);
        assert!(p.system_text.contains("Components:"));
        assert!(p.system_text.contains(NO_CANDIDATE));
        assert_eq!(p.user_text.matches("an airplane is flying in the blue sky").count(), 1);
    }

    #[test]
    fn empty_caption_is_rejected() {
        assert!(matches!(build_prompt("", NegType::Replace), Err(NegGenError::EmptyCaption)));
        assert!(matches!(build_prompt("  ", NegType::Swap), Err(NegGenError::EmptyCaption)));
    }
}
