from .fed_avg import SiteUpdate, fedavg_aggregate
from .gcml_merge import gcml_merge
