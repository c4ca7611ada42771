from setuptools import setup, find_packages

setup(
    name='lrcssp-toolkit',
    packages=find_packages(exclude=["*tests*", "*debug*","*docs*"]),
    install_requires=['numpy>=1.20', 'pandas>=1.5.0', 'joblib', 'dill', 'PyYAML>=5.1'],
    extras_require={'test': ['pytest', 'scipy>=1.6']},
    entry_points={'console_scripts': ['lrcssp = lrcssp.cli:main']},
    python_requires='>=3.8',
    include_package_data=True,
    version='0.1.0',
    license='Apache 2.0',
    description='Optimistic learning for linear contextual stochastic shortest path problems',
    long_description=open('README.md').read(),
)
