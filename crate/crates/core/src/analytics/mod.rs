//! Population statistics behind the exploration views.

mod correlation;
mod graph;
mod profile;
mod summary;

pub use correlation::{
    average_ranks, spearman, spearman_columns, spearman_matrix, spearman_p_value, top_pairs,
    CorrelationCell, CorrelationMatrix, CorrelationPair,
};
pub use graph::{build_similarity_graph, euclidean, nearest, GraphEdge, GraphNode, ProfileGraph, GRAPH_NEIGHBORS};
pub use profile::{
    divide_3sigma, normalize_scores, profile_score, profile_scores, Divisions, GroupFilter,
    ProfileScore,
};
pub use summary::{
    group_context_summary, motion_summary, sankey_aggregate, ContextSummary, GroupMeans,
    MotionBucket, MotionSummary, ParticipantRow, SankeyFlow,
};
