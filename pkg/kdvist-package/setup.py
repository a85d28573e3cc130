import setuptools

setuptools.setup(
    name="kdvist",
    version="0.0.1",
    author="kdvist developers",
    packages=setuptools.find_packages(),
    install_requires=[
        # numerics
        'numpy>=2.2.3,<3.0.0',
        'scipy>=1.15.2,<2.0.0',
        # serializers
        'cloudpickle>=3.1.1,<4.0.0',
        'msgspec>=0.19.0,<1.0.0',
        # async logging
        'aiologger>=0.7.0,<1.0',
        # tabular outputs
        'pandas>=2.2.3,<3.0.0',
        # hashing potentials and configs
        'cityhash>=0.4.8,<1.0.0',
    ],
    python_requires='>=3.10',
)
