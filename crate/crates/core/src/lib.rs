pub mod geom;
pub mod solids;
pub mod model;
pub mod expr;
pub mod paramfill;
pub mod scene;
pub mod query;
pub mod events;
pub mod export;

use thiserror::Error;

/// Any error raised by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error(transparent)]
    Fill(#[from] paramfill::FillError),
    #[error(transparent)]
    Build(#[from] scene::BuildError),
    #[error(transparent)]
    Mutation(#[from] scene::MutationError),
    #[error(transparent)]
    Query(#[from] query::QueryError),
    #[error(transparent)]
    Event(#[from] events::EventError),
    #[error(transparent)]
    Convert(#[from] export::ConvertError),
    #[error(transparent)]
    Solid(#[from] solids::SolidError),
}
