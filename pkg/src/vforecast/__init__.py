"""Visual time-series forecasting.

Series are rasterized into images whose columns are probability
distributions over value bins, a convolutional autoencoder forecasts
the next image under a column-wise Jensen-Shannon loss, and forecasts
are scored against numeric baselines with a column-wise
intersection-over-union metric.
"""

from .baselines import RandomWalkModel, numeric_to_image, rw_fit, rw_predict
from .complexity import WpeConfig, wpe
from .divergence import columnwise_loss, huber, jsd, jsd_profile, kld
from .errors import DataError, NumericError, ParameterError, VForecastError
from .ioumetric import (
    EMPTY_INTERVAL,
    IoUProfile,
    RowInterval,
    ThresholdRule,
    column_bbox,
    column_iou,
    image_iou_profile,
    region_scores,
)
from .nets import (
    NumAEConfig,
    ParamSet,
    VisualAEConfig,
    backward,
    describe,
    init_params,
    load_checkpoint,
    num_ae_forward,
    save_checkpoint,
    visual_ae_forward,
)
from .raster import (
    RenderSpec,
    SeriesImage,
    WindowSpec,
    decode,
    normalize_columns,
    read_vfim,
    render,
    window_pair,
    write_pgm,
    write_vfim,
)
from .rng import substream
from .seriesgen import (
    DatasetSplit,
    HarmonicParams,
    OUParams,
    TimeSeries,
    gen_harmonic,
    gen_ou,
    load_series_csv,
    make_splits,
    sample_harmonic_params,
    sample_ou_params,
    standardize,
)
from .trainer import PlateauSchedule, TrainConfig, TrainHistory, evaluate_epoch, train

__version__ = "0.1.0"
