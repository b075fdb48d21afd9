//! Upper bounds on the quasiconvex envelope of the reduced density: explicit
//! test-function constructions, rank-one lamination, growth certificates and
//! rank-one convexity probes.

mod bounds;
mod growth;
mod laminate;
mod table;

pub use bounds::{
    composed_bound, four_corner_bound, four_corners, orthogonal_normal, square_normal, square_refine_bound,
    square_shifts, zw0_upper_from_testfn, MembraneDensity,
};
pub use growth::{
    audit_table, growth_certificate, rank_one_convexity_probe, GrowthCertificate, ProbeParams, ProbeRegion,
    ProbeReport, ProbeWitness, TableAudit,
};
pub use laminate::{
    hemisphere_net, EnvelopeInterpolant, Laminate, LaminationTables, SearchParams, SharedDensity, Split,
};
pub use table::{diagonal_slice, EnvelopeEntry, EnvelopeTable, Provenance};
