use std::collections::HashMap;

use thiserror::Error;

use crate::expr::{expand_document, ExprError};
use crate::model::{expand_placements, GenericDocument, ModelError, Version};
use crate::paramfill::{fill, ConnectionConfig, FillError, ParameterSource};

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error(transparent)]
    Fill(#[from] FillError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Fill, evaluate and unroll a document into explicit v4 form. Definitions
/// are dropped since nothing refers to them afterwards.
pub fn convert_v6_to_v4(
    doc: &GenericDocument,
    config: &ConnectionConfig,
    sources: &HashMap<String, &dyn ParameterSource>,
) -> Result<GenericDocument, ConvertError> {
    let filled = fill(doc, config, sources)?;
    let mut out = expand_placements(&expand_document(&filled)?)?;
    out.definitions.clear();
    out.version = Version::V4;
    Ok(out)
}

/// Explicit documents are already valid v6; only the version changes.
pub fn convert_v4_to_v6(doc: &GenericDocument) -> GenericDocument {
    GenericDocument {
        version: Version::V6,
        ..doc.clone()
    }
}
