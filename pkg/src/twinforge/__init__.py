"""twinforge: digital-twin model updating by sparse Bayesian discovery of
perturbation (and diffusion) terms from noisy measurements."""

from .dictionary import (
    FAMILIES,
    LibrarySpec,
    LibraryMatrix,
    Column,
    enumerate_columns,
    n_columns,
    column_labels,
    evaluate,
    parse_label,
    evaluate_label,
)
from .sampler import (
    Hyperparameters,
    SamplerState,
    PosteriorSummary,
    initialize,
    gibbs_sweep,
    run_chain,
    predict,
)
from .targets import (
    Dataset,
    NominalModel,
    RegressionProblem,
    differentiate,
    build_f1,
    build_f2_drift,
    build_f2_diffusion,
)
from .simulate import (
    SystemDef,
    NoisePolicy,
    rk4_simulate,
    em_simulate,
    corrupt,
    builtin_systems,
    get_system,
    make_duffing,
    make_coupled_2dof,
    make_crack,
    default_noise_levels,
    synth_forcing,
)
from .twin import (
    Term,
    DiffusionTerm,
    UpdatedTwin,
    SweepReport,
    Prediction,
    update_f1,
    update_f2,
    render_equations,
    parse_equations,
    predict_states,
    noise_sweep,
)
from .presets import RunPreset, get_preset, preset_names, full_library, polynomial_library
from .errors import (
    ConfigurationError,
    IllConditionedLibraryError,
    SimulationBlowUpError,
    PredictionError,
)

__version__ = "0.1.0"
