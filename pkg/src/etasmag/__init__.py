"""Temporal ETAS with a mother-dependent magnitude law, plus the windowed and
mother-attribution analyses of triggered-event magnitudes."""

from .catalog import (BACKGROUND, UNKNOWN, Catalog, CountSeries, Event, daily_counts,
                      filter_catalog, haversine_km, load_catalog, mean_pair_distance,
                      write_catalog)
from .correlation import (AcfEstimate, CausalWindow, PowerLawFit, acf_significance,
                          autocorrelation, fit_power_law, select_delta_star)
from .etas import (Attribution, EtasEstimator, EtasParams, FitReport, attribute_mothers,
                   fit_params, intensity, log_likelihood, time_rescale)
from .kde import (DensityEstimate, FrequencyTable, MagnitudeKDE, estimate_density,
                  frequency_table, loocv_bandwidth)
from .magnitudes import (ConditionalLaw, GrLaw, OmoriLaw, ProductivityLaw, conditional_density,
                         conditional_sample, gr_density, gr_sample, omori, productivity)
from .simulation import SimConfig, simulate
from .trend import (MagnitudeGroup, SubintervalScheme, TrendResult, make_subintervals,
                    mother_groups, windowed_groups)

__version__ = "0.1.0"
