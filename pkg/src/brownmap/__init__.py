"""Random quadrangulations, their Brownian-map continuum surrogate, and geodesic statistics."""

__version__ = "0.1.0"

from .maps import (  # noqa: E402
    C_QUAD,
    LabeledPlaneTree,
    MapFormatError,
    QuadMap,
    cvs_bijection,
    load_qmap,
    sample_labeled_tree,
    sample_quadrangulation,
    save_qmap,
)
from .geodesics import GeodesicDAG, bfs_dag, bfs_distances, enumerate_geodesics, simple_geodesic  # noqa: E402
from .excursion import Excursion, d_e, sample_excursion  # noqa: E402
from .labels import LabelField, d_star, d_Z, root_distance_check, sample_labels  # noqa: E402
from .analysis import (  # noqa: E402
    MapSession,
    NetworkReport,
    ScalingFit,
    classify_network,
    confluence_stat,
    cut_locus,
    dimension_fit,
    star_census,
)
