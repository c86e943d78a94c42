//! Frozen digests, captured on the first run.

/// `(name, [mean, 16 evenly spaced elements])`.
pub const GOLDEN: &[(&str, &[f64])] = &[
    ("encdec", &[3.557611512162989e-3, -3.2026471240216587e-3, -1.4379912038908772e-2, -1.521711657798306e-2, -1.484815657215812e-2, -1.2783804723669134e-2, 1.0320017782285572e-2, 1.4903135529473277e-2, 9.809031481414415e-3, 9.370860767877295e-3, 4.878083796787877e-3, 7.430556780821057e-3, 1.2999447743679348e-2, 1.1061412760465393e-2, 1.1046101343252769e-2, 5.7374097325816e-3, 2.6016069288195397e-3]),
    ("perceptual_0", &[2.7028864016282127e-3, -1.9441893789734782e-1, -6.934663132536954e-2, 2.6914751989244023e-1, 1.262597597365082e-1, -9.87188755982805e-2, 7.943370938959779e-2, 5.129583464598614e-1, 4.3526500854620553e-1, 2.3514810320194748e-1, 4.0209766129456737e-1, -1.5964389265555404e-1, -4.96568082065354e-2, -1.297588535378557e-1, -2.175458019698307e-1, -2.660601001097714e-1, 1.196980430556492e-1]),
    ("perceptual_4", &[-3.873876519001221e-3, -5.553065104779326e-3, -1.985640849251319e-2, 1.32714178578671e-2, -8.780901889438803e-3, 1.662329701778516e-2, -5.961186686750401e-3, -2.3228039612985484e-2, -1.943640881245331e-2, -7.724034788818965e-3, -6.593261032744596e-3, 1.1599468528183745e-2, -1.7066882704039426e-2, -1.1268712173526794e-2, 3.7503046011723154e-3, 3.3659374098344527e-3, -2.3137118518866486e-2]),
    ("gru_step", &[1.6144228060079058e-1, 4.0949964347735546e-1, 3.932688917698241e-1, 2.5470722911538773e-1, 7.109671201429034e-2, 3.286263664967545e-2, 7.612152333608829e-2, 9.615790081644598e-2, 3.976201690380478e-2, 4.7241401593923135e-2, 1.2327696508959664e-1, 2.3627797761720912e-1, 4.129987224760062e-2, 1.0095930836798102e-1, 2.037257975082317e-1, 3.679024185104267e-1, 4.9488514829318886e-1]),
    ("aggregate", &[-1.475914383003919e-2, 7.453644060522308e-2, -6.033120365201854e-2, -7.205625047751804e-2, -9.51699961883507e-2, -7.402869665166131e-2, -6.875183803868004e-2, -5.405013721748725e-2, 1.9556443838028075e-3, -6.919301793361485e-2, -1.3263999840119e-1, -5.412101816720675e-2, 4.099808353155607e-2, 8.436465999899e-2, 5.5279819739171385e-2, -3.950559199119827e-3, -7.403840666292222e-2]),
    ("bundle_flow", &[-3.4203749925029145e-4, -1.6112505931030477e-4, -8.003717692799841e-5, 3.1036771667112763e-3, 4.702234258105058e-3, 2.7646579275305847e-3, 1.8360514354918713e-3, -1.7559357618969409e-4, -1.5164193496170278e-3, -3.3040727662189895e-4, -5.446820905045293e-4, -3.184469353900001e-4, -3.3308338572363254e-3, 2.940132731019343e-3, -1.7043781241850822e-3, -4.6841823643058167e-4, -1.3872443055113369e-3]),
    ("bundle_warped", &[2.2120553490260372e-1, 0e0, 0e0, 2.868945535367508e-1, 2.4993582256104382e-1, 0e0, 0e0, 0e0, 7.12913587728857e-1, 7.490977576180944e-1, 0e0, 0e0, 0e0, 1.8469541811074217e-1, 1.9700721672783508e-1, 0e0, 0e0]),
    ("bundle_parsing_prob", &[1.4285714285714216e-1, 1.4326878142996366e-1, 1.4253982847121635e-1, 1.425107689106356e-1, 1.422528725691442e-1, 1.4224507846658993e-1, 1.4215664811907525e-1, 1.416489705963572e-1, 1.429545484648729e-1, 1.4268455115325085e-1, 1.4438290975844675e-1, 1.4346661791274282e-1, 1.4507394723728909e-1, 1.436722313890528e-1, 1.4218589253472252e-1, 1.417270923791047e-1, 1.4210942645074628e-1]),
    ("bundle_coarse", &[5.001605414358696e-1, 4.9970158338393755e-1, 4.996604865230014e-1, 4.99612043702972e-1, 4.9939335679971325e-1, 4.997401584946444e-1, 5.000965213230918e-1, 5.000958663535409e-1, 4.9803340366976523e-1, 5.000386661722659e-1, 5.003070059529787e-1, 5.001327559460713e-1, 5.00568901683739e-1, 5.005519387813807e-1, 5.016344773467504e-1, 5.005874350947833e-1, 4.999709630819359e-1]),
    ("bundle_fine", &[4.982468519065813e-1, 5.000526984410495e-1, 5.003437594369328e-1, 5.004363378638578e-1, 4.986671160467754e-1, 5.002331655140658e-1, 4.997892290738692e-1, 4.9430341565203145e-1, 4.966463498035082e-1, 4.936702013547278e-1, 4.946824303081322e-1, 4.9906580115278615e-1, 5.000371935370698e-1, 4.990168964200963e-1, 4.9951337297612053e-1, 5.005053170720433e-1, 5.013180889506541e-1]),
];
