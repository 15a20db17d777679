//! Spatial attributed graphs of a community and its contexts, and the
//! variational graph autoencoder that embeds them.

mod graph;
mod vgae;

pub use graph::{
    adjacency, build_graph, graph_from_rows, normalize_adjacency, pool_rows, reconstruction_auc,
    with_self_loops, write_embeddings_csv, AdjacencyPattern, ContextEmbedding, EmbeddingMode,
    PoolSet, SpatialGraph, NODE_COUNT, RING_ORDER,
};
pub use vgae::{
    decode, draw_noise, encode, kl_term, loss_and_grads, reconstruction_term, reparameterize,
    reparameterize_with, train_vgae, vgae_loss, Encoding, Vgae, VgaeConfig, VgaeGrads, VgaeLog,
    VgaeRun, CHECKPOINT_KIND, SIGMA_FLOOR, W1, W_LOGVAR, W_MU,
};
