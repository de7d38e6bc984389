from .dataset import FederatedDataset, LabeledDataset
from .datasetsplit import split_site_data
from .loader_util import export_dataset, import_dataset, load_layout
from .synthetic import generate_federation
