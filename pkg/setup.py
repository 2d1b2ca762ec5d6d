import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="mpntrack",
    version="0.1.0",
    description="Graph-based multi-object tracking with a time-aware message passing network",
    long_description=long_description,
    long_description_content_type="text/markdown",
    keywords = ['Multi-object tracking', 'Message passing network', 'Min-cost flow', 'CLEAR-MOT'],
    packages=setuptools.find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "torch",
        "tqdm",
    ],
    extras_require={
        "test": ["pytest", "hypothesis"],
    },
    entry_points={
        "console_scripts": ["mpntrack=mpntrack.cli:main"],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.8',
)
