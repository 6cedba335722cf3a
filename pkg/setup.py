from setuptools import find_packages, setup

setup(
    name='temporal-kernel-autoencoder',
    packages=find_packages(exclude=('tests', 'scripts')),
    python_requires='>=3.8',
    install_requires=[
        'numpy',
        'scipy',
        'torch',
        'scikit-learn',
        'tqdm',
        'loguru',
    ],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['tkae = src.cli:main']},
)
