//! Patient data: clinical codings, typed tables and stratum filters.

pub mod coding;
pub mod filter;
pub mod table;

pub use coding::{wfns_from_gcs, CodingError, GcsAssessment, GosCategory, WfnsGrade};
pub use filter::{apply_stratum, parse_filter, parse_filter_expr, FilterError, StratumFilter, StratumReport};
pub use table::{
    ingest_csv, ColumnData, ColumnSpec, ColumnType, ExclusionReport, IngestError, IngestSummary, PatientTable,
    Role, Schema, SchemaError,
};
