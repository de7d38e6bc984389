from setuptools import setup, find_packages
from fedmesh import __version__
setup(
    name="fedmesh",
    description="Federated learning engine and simulator for FedAvg, FedProx and gossip contrastive mutual learning",
    packages=find_packages(exclude=['tests', 'tests.*']),
    version=__version__,
    python_requires='>=3.8',
    entry_points={
        "console_scripts": [
            "fedmesh = fedmesh.__main__:main",
        ]
    },
    include_package_data=True,
    data_files=[
        ('share/fedmesh/configs', ['configs/minimal.yaml', 'configs/fedavg_iid.yaml', 'configs/fedavg_noniid.yaml',
                                   'configs/fedprox_noniid.yaml', 'configs/gcml_5.yaml']),
        ('share/fedmesh/configs/layouts', ['configs/layouts/minimal.yaml', 'configs/layouts/iid_8.yaml',
                                           'configs/layouts/quantity_8.yaml', 'configs/layouts/gcml_5.yaml']),
        ('share/fedmesh/configs/plans', ['configs/plans/orderings.yaml']),
    ],
    install_requires=
    [
        'tqdm>=4.49.0',
        'pandas>=1.1.2',
        'numpy>=1.20.0',
        'torch>=1.10.0',
        'scipy>=1.4.1',
        'pyyaml',
        'dataclasses-json>=0.5.4',
    ],
    extras_require={
        'test': ['pytest', 'parameterized'],
    },
)
