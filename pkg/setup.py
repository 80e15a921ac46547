from pathlib import Path
from setuptools import setup, find_packages

def get_requirements():
    req_path = Path(__file__).parent / 'requirements.txt'
    with req_path.open() as f:
        return [line for line in f.read().splitlines() if line.strip()]

def get_version():
    version_path = Path(__file__).parent / 'dual_level_forecaster' / 'version.py'
    with version_path.open() as f:
        version_line = next(line for line in f if line.startswith('__version__'))
        version = version_line.split('=')[1].strip().strip("'\"")
        return version

setup(
    name='dual_level_forecaster',
    version=get_version(),

    packages=find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    package_data={'dual_level_forecaster': ['configs/*.json']},
    install_requires=get_requirements(),
    python_requires='>=3.10',
    entry_points={
        'console_scripts': ['dual-level-forecaster=dual_level_forecaster.cli:main'],
    },

    license="MIT",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
)
