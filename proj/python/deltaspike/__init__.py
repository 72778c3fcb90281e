"""Send-on-delta event coding and surrogate-gradient spiking networks."""

from ._deltaspike import (
    ConfigError,
    DataError,
    DirectionBank,
    DivergenceError,
    EventStream,
    IoError,
    Network,
    ParameterError,
    beta_from_tau,
    evaluate,
    gradcheck,
    if_sod_encode,
    lif_discrete_step,
    lif_exact_solve,
    log_mel_features,
    mel_center_frequencies,
    multidim_sod_encode,
    read_wav,
    reference_trajectory,
    sod_reconstruct,
    sod_sample,
    train_synthetic,
)

__all__ = [name for name in dir() if not name.startswith("_")]
