"""Graph generation with quantized latent node sets and diffusion bridges.

A permutation-equivariant graph autoencoder maps graphs to sets of latent
node coordinates that are snapped onto a small integer lattice. A diffusion
bridge conditioned on that lattice provides both a closed-form training
target for a learned drift network and a sampler for new graphs.
"""

from .bridges import (BridgeSchedule, ContinuousDomainSpec, PriorSpec, beta,
                      drift_box, drift_endpoint, drift_lattice,
                      drift_lattice_naive, em_integrate, em_sample,
                      loss_target, sample_bridge_state, sigma)
from .features import AugmentedGraph, FeatureSpec, augment, batch_graphs
from .fsq import (LatentSet, QuantizationSpec, enumerate_lattice,
                  nearest_lattice, quantize, ste_combine)
from .generators import (CommunityParams, extract_ego_graphs,
                         generate_community_small)
from .graph_io import load_graphs, save_graphs
from .graphs import AttributedGraph, GraphBatch, graphs_equal, permute
from .metrics import (Histogram, ValenceTable, clustering_hist, degree_hist,
                      emd, eval_generic, mmd2, orbit_counts, orbit_hist,
                      uniqueness_novelty, valence_validity, wl_hash)
from .nn import (GraphTransformerConfig, ParameterStore, decoder_forward,
                 drift_forward, encoder_forward, grad_check,
                 init_decoder_params, init_drift_params, init_encoder_params)
from .training import (NodeCountHistogram, TrainConfig, decode_latents,
                       encode_dataset, reconstruction_report,
                       sample_graph_latents, train_autoencoder, train_bridge,
                       train_unquantized_variant)

__version__ = "0.1.0"
